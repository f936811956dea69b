use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Instant;

use ortrack::features::{EmbeddingProvider, FileProvider, ServiceProvider, SyntheticProvider};
use ortrack::ingest::{read_detections, read_orset, DetectionSource, FrameRef, ServiceDetector};
use ortrack::tracker::{self, write_results};
use ortrack::ServiceConfig;
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::config::{format_frame_pattern, DetectionConfig, EmbeddingConfig, RunConfig};
use crate::{CliError, TrackArgs};

/// Fold command-line overrides into the loaded config.
pub(crate) fn apply_overrides(cfg: &mut RunConfig, args: &TrackArgs) -> Result<(), CliError> {
    let t = &mut cfg.tracker;
    if let Some(v) = args.alpha {
        t.alpha = v;
    }
    if let Some(v) = args.lambda {
        t.lambda = v;
    }
    if let Some(v) = args.theta {
        t.theta = v;
    }
    if let Some(v) = args.tau_max {
        t.tau_max = v;
    }
    if args.strict {
        t.strict = true;
    }
    if args.seed.is_some() || args.sigma.is_some() {
        let EmbeddingConfig::Synthetic {
            seed, noise_sigma, ..
        } = &mut cfg.embedding
        else {
            return Err(CliError::Usage(
                "--seed/--sigma only apply to the synthetic embedding provider".into(),
            ));
        };
        if let Some(v) = args.seed {
            *seed = v;
        }
        if let Some(v) = args.sigma {
            *noise_sigma = v;
        }
    }
    if let Some(endpoint) = &args.endpoint {
        if let Some(DetectionConfig::Service { endpoint: e, .. }) = &mut cfg.detection {
            *e = endpoint.clone();
        }
        if let EmbeddingConfig::Service { endpoint: e, .. } = &mut cfg.embedding {
            *e = endpoint.clone();
        }
    }
    cfg.validate()
}

fn detection_source(cfg: &RunConfig) -> Result<Box<dyn DetectionSource>, CliError> {
    match &cfg.detection {
        None => Err(CliError::Usage(
            "no detection source: add a [detection] table to the config".into(),
        )),
        Some(DetectionConfig::File { path }) => Ok(Box::new(read_detections(path)?)),
        Some(DetectionConfig::Service {
            endpoint,
            family,
            timeout_ms,
            retries,
        }) => Ok(Box::new(ServiceDetector::new(
            ServiceConfig {
                endpoint: endpoint.clone(),
                timeout_ms: *timeout_ms,
                retries: *retries,
            },
            *family,
            cfg.tracker.dims,
        ))),
    }
}

fn embedding_provider(cfg: &RunConfig) -> Result<Box<dyn EmbeddingProvider>, CliError> {
    Ok(match &cfg.embedding {
        EmbeddingConfig::Synthetic {
            seed,
            noise_sigma,
            dim,
        } => Box::new(SyntheticProvider::new(*seed, *noise_sigma, *dim)?),
        EmbeddingConfig::File { path } => Box::new(FileProvider::open(path)?),
        EmbeddingConfig::Service {
            endpoint,
            dim,
            timeout_ms,
            retries,
        } => Box::new(ServiceProvider::new(
            ServiceConfig {
                endpoint: endpoint.clone(),
                timeout_ms: *timeout_ms,
                retries: *retries,
            },
            *dim,
        )),
    })
}

pub(crate) fn manifest_path(out: &Path) -> PathBuf {
    let mut name = out.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.json");
    out.with_file_name(name)
}

pub fn run(args: TrackArgs) -> Result<(), CliError> {
    let started = Instant::now();
    let mut cfg = match &args.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    apply_overrides(&mut cfg, &args)?;

    let scene = args.scene.as_deref().map(read_orset).transpose()?;
    let description = args
        .description
        .clone()
        .or_else(|| scene.as_ref().map(|s| s.description.clone()))
        .ok_or_else(|| CliError::Usage("no description: pass --description or --scene".into()))?;
    let indices: Vec<u64> = match (args.frames, &scene) {
        (Some((a, b)), _) => (a..=b).collect(),
        (None, Some(s)) => s.scored_frames().collect(),
        (None, None) => {
            return Err(CliError::Usage(
                "no frames: pass --frames or --scene".into(),
            ));
        }
    };
    let frames: Vec<FrameRef> = indices
        .iter()
        .map(|&i| FrameRef {
            index: i,
            image: cfg
                .frames
                .image_pattern
                .as_ref()
                .map(|p| format_frame_pattern(p, i)),
        })
        .collect();

    let source = detection_source(&cfg)?;
    let provider = embedding_provider(&cfg)?;
    let load_ms = started.elapsed().as_millis();
    let trajectories = tracker::run(
        &frames,
        &description,
        source.as_ref(),
        provider.as_ref(),
        &cfg.tracker,
    )?;
    let track_ms = started.elapsed().as_millis() - load_ms;

    let file = File::create(&args.out).map_err(|e| CliError::io(&args.out, e))?;
    write_results(BufWriter::new(file), &trajectories).map_err(|e| CliError::io(&args.out, e))?;

    let effective = cfg.to_toml();
    let seed = match cfg.embedding {
        EmbeddingConfig::Synthetic { seed, .. } => Some(seed),
        _ => None,
    };
    let manifest = json!({
        "version": env!("CARGO_PKG_VERSION"),
        "config_sha256": hex::encode(Sha256::digest(effective.as_bytes())),
        "config": effective,
        "seed": seed,
        "inputs": {
            "config": args.config,
            "scene": args.scene,
            "description": description,
            "frames": frames.len(),
        },
        "outputs": {
            "results": args.out,
            "trajectories": trajectories.len(),
        },
        "timings_ms": {
            "load": load_ms,
            "track": track_ms,
        },
    });
    let mpath = manifest_path(&args.out);
    let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    text.push('\n');
    std::fs::write(&mpath, text).map_err(|e| CliError::io(&mpath, e))?;
    log::info!(
        "tracked {} trajectories over {} frames",
        trajectories.len(),
        frames.len()
    );
    Ok(())
}
