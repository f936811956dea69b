//! Run configuration document (TOML).

use std::path::{Path, PathBuf};

use ortrack::features::DEFAULT_DIM;
use ortrack::ingest::PromptFamily;
use ortrack::metrics::MetricOptions;
use ortrack::tracker::TrackerConfig;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// Environment variable that overrides the detection service endpoint.
pub const ENDPOINT_ENV: &str = "ORTRACK_SERVICE_ENDPOINT";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum DetectionConfig {
    File {
        path: PathBuf,
    },
    Service {
        endpoint: String,
        #[serde(default)]
        family: PromptFamily,
        #[serde(default = "default_timeout_ms")]
        timeout_ms: u64,
        #[serde(default = "default_retries")]
        retries: u32,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum EmbeddingConfig {
    Synthetic {
        #[serde(default)]
        seed: u64,
        #[serde(default)]
        noise_sigma: f64,
        #[serde(default = "default_dim")]
        dim: usize,
    },
    File {
        path: PathBuf,
    },
    Service {
        endpoint: String,
        #[serde(default = "default_dim")]
        dim: usize,
        #[serde(default = "default_timeout_ms")]
        timeout_ms: u64,
        #[serde(default = "default_retries")]
        retries: u32,
    },
}

fn default_dim() -> usize {
    DEFAULT_DIM
}

fn default_timeout_ms() -> u64 {
    30_000
}

fn default_retries() -> u32 {
    2
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        EmbeddingConfig::Synthetic {
            seed: 0,
            noise_sigma: 0.0,
            dim: DEFAULT_DIM,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FramesConfig {
    /// Image path template, e.g. `frames/{frame:06}.jpg`.
    pub image_pattern: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub tracker: TrackerConfig,
    pub detection: Option<DetectionConfig>,
    pub embedding: EmbeddingConfig,
    pub frames: FramesConfig,
    pub metrics: MetricOptions,
}

impl RunConfig {
    /// Parse and validate; relative paths resolve against `base`.
    pub fn from_toml(text: &str, base: &Path) -> Result<Self, CliError> {
        let mut cfg: RunConfig =
            toml::from_str(text).map_err(|e| CliError::Schema(format!("config: {e}")))?;
        cfg.resolve_paths(base);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml(&text, base)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(DetectionConfig::File { path }) = &mut self.detection {
            fix(path);
        }
        if let EmbeddingConfig::File { path } = &mut self.embedding {
            fix(path);
        }
        if let Some(pattern) = &mut self.frames.image_pattern {
            if Path::new(pattern.as_str()).is_relative() {
                *pattern = base.join(&*pattern).to_string_lossy().into_owned();
            }
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.tracker
            .validate()
            .map_err(|e| CliError::Schema(format!("tracker: {e}")))?;
        if let EmbeddingConfig::Synthetic {
            noise_sigma, dim, ..
        } = self.embedding
        {
            if !noise_sigma.is_finite() || noise_sigma < 0.0 {
                return Err(CliError::Schema(
                    "embedding.noise_sigma must be >= 0".into(),
                ));
            }
            if dim == 0 {
                return Err(CliError::Schema("embedding.dim must be positive".into()));
            }
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }
}

/// Expand `{frame}` or `{frame:0N}` in an image path template.
pub fn format_frame_pattern(pattern: &str, frame: u64) -> String {
    let Some(start) = pattern.find("{frame") else {
        return pattern.to_string();
    };
    let Some(len) = pattern[start..].find('}') else {
        return pattern.to_string();
    };
    let spec = &pattern[start + "{frame".len()..start + len];
    let formatted = match spec
        .strip_prefix(":0")
        .and_then(|w| w.parse::<usize>().ok())
    {
        Some(width) => format!("{frame:0width$}"),
        None => frame.to_string(),
    };
    format!(
        "{}{}{}",
        &pattern[..start],
        formatted,
        &pattern[start + len + 1..]
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let cfg = RunConfig::default();
        let back = RunConfig::from_toml(&cfg.to_toml(), Path::new("")).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn shipped_defaults() {
        let cfg = RunConfig::from_toml("", Path::new("")).unwrap();
        assert_eq!(cfg.tracker.alpha, 1.2);
        assert_eq!(cfg.tracker.lambda, 0.5);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        for doc in [
            "bogus = 1",
            "[tracker]\nalphaa = 1.3",
            "[detection]\nkind = \"file\"\npath = \"x\"\nextra = 2",
            "[embedding]\nkind = \"quantum\"",
        ] {
            assert!(
                matches!(
                    RunConfig::from_toml(doc, Path::new("")),
                    Err(CliError::Schema(_))
                ),
                "{doc}"
            );
        }
        assert!(matches!(
            RunConfig::from_toml("[tracker]\nalpha = 0.5", Path::new("")),
            Err(CliError::Schema(_))
        ));
    }

    #[test]
    fn relative_paths_resolve_against_config_dir() {
        let cfg = RunConfig::from_toml(
            "[detection]\nkind = \"file\"\npath = \"d.jsonl\"",
            Path::new("/data/run"),
        )
        .unwrap();
        assert_eq!(
            cfg.detection,
            Some(DetectionConfig::File {
                path: PathBuf::from("/data/run/d.jsonl")
            })
        );
    }

    #[test]
    fn frame_patterns() {
        assert_eq!(format_frame_pattern("f/{frame:06}.jpg", 42), "f/000042.jpg");
        assert_eq!(format_frame_pattern("f/{frame}.png", 7), "f/7.png");
        assert_eq!(format_frame_pattern("static.png", 7), "static.png");
    }
}
