//! `ortrack` command-line driver.

use std::path::PathBuf;

use clap::{ArgGroup, Args, Parser, Subcommand, ValueEnum};
use ortrack::geometry::IouMode;
use ortrack::synth::Motion;

pub mod config;
pub mod error;
mod eval;
mod keyframes;
mod render;
mod synth;
mod track;

pub use error::CliError;

#[derive(Debug, Parser)]
#[command(
    name = "ortrack",
    version,
    about = "Language-referred tracking on panoramic video"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Track the described objects through a sequence.
    Track(TrackArgs),
    /// Score tracker output against ground truth.
    Eval(EvalArgs),
    /// Generate a synthetic scene with known ground truth.
    Synth(SynthArgs),
    /// Pick keyframes from a frame-difference signal.
    Keyframes(KeyframesArgs),
    /// Draw tracked boxes onto frame images.
    Render(RenderArgs),
}

#[derive(Debug, Args)]
pub struct TrackArgs {
    /// Run configuration (TOML).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Annotation file; supplies the description and frame ranges.
    #[arg(long)]
    pub scene: Option<PathBuf>,
    #[arg(long)]
    pub description: Option<String>,
    /// Inclusive frame range `START:END`, overriding the scene ranges.
    #[arg(long, value_parser = parse_frames)]
    pub frames: Option<(u64, u64)>,
    /// Output results file (JSON lines).
    #[arg(long)]
    pub out: PathBuf,
    /// Service endpoint for detection and embedding clients.
    #[arg(long, env = config::ENDPOINT_ENV)]
    pub endpoint: Option<String>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub theta: Option<f64>,
    #[arg(long)]
    pub tau_max: Option<u32>,
    /// Synthetic embedding seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Synthetic embedding noise.
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Abort on the first failed detection call.
    #[arg(long)]
    pub strict: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum IouArg {
    Plain,
    Wrap,
}

impl From<IouArg> for IouMode {
    fn from(a: IouArg) -> Self {
        match a {
            IouArg::Plain => IouMode::Plain,
            IouArg::Wrap => IouMode::Wrap,
        }
    }
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Ground-truth annotation file; repeat for several pairs.
    #[arg(long, required = true)]
    pub gt: Vec<PathBuf>,
    /// Results file, paired with the `--gt` at the same position.
    #[arg(long, required = true)]
    pub pred: Vec<PathBuf>,
    /// Metric options taken from the `[metrics]` table of a run config.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub matching: Option<IouArg>,
    #[arg(long, value_enum)]
    pub loca: Option<IouArg>,
    /// Also write the full report as JSON.
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MotionArg {
    Linear,
    Seam,
}

impl From<MotionArg> for Motion {
    fn from(m: MotionArg) -> Self {
        match m {
            MotionArg::Linear => Motion::Linear,
            MotionArg::Seam => Motion::Seam,
        }
    }
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 10)]
    pub objects: usize,
    #[arg(long, default_value_t = 200)]
    pub frames: u64,
    #[arg(long, value_enum, default_value_t = MotionArg::Linear)]
    pub motion: MotionArg,
    /// Embedding noise written into the generated config.
    #[arg(long, default_value_t = 0.0)]
    pub sigma: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("source").required(true).args(["signal", "gray", "video"])))]
pub struct KeyframesArgs {
    /// Precomputed difference signal, whitespace separated.
    #[arg(long)]
    pub signal: Option<PathBuf>,
    /// Grayscale frames, one JSON array of intensities per line.
    #[arg(long)]
    pub gray: Option<PathBuf>,
    /// Video file, decoded through `ffmpeg`.
    #[arg(long)]
    pub video: Option<PathBuf>,
    #[arg(long, default_value_t = 5)]
    pub smooth_w: usize,
    #[arg(long, default_value_t = 1.0)]
    pub k: f64,
    #[arg(long, default_value_t = 15)]
    pub d_min: usize,
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    #[arg(long)]
    pub results: PathBuf,
    /// Frame image template, e.g. `frames/{frame:06}.jpg`.
    #[arg(long)]
    pub frames_pattern: String,
    /// Output directory for annotated PNGs.
    #[arg(long)]
    pub out: PathBuf,
}

fn parse_frames(s: &str) -> Result<(u64, u64), String> {
    let (a, b) = s.split_once(':').ok_or("expected START:END")?;
    let a: u64 = a.trim().parse().map_err(|e| format!("bad start: {e}"))?;
    let b: u64 = b.trim().parse().map_err(|e| format!("bad end: {e}"))?;
    if a > b {
        return Err(format!("start {a} after end {b}"));
    }
    Ok((a, b))
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Track(a) => track::run(a),
        Command::Eval(a) => eval::run(a),
        Command::Synth(a) => synth::run(a),
        Command::Keyframes(a) => keyframes::run(a),
        Command::Render(a) => render::run(a),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn frame_ranges() {
        assert_eq!(parse_frames("3:9"), Ok((3, 9)));
        assert!(parse_frames("9:3").is_err());
        assert!(parse_frames("9").is_err());
    }
}
