use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;

use ortrack::ingest::{serialize_orset, write_detections};
use ortrack::synth::{generate, SynthSpec};

use crate::config::{DetectionConfig, EmbeddingConfig, RunConfig};
use crate::{CliError, SynthArgs};

pub fn run(args: SynthArgs) -> Result<(), CliError> {
    let spec = SynthSpec {
        objects: args.objects,
        frames: args.frames,
        motion: args.motion.into(),
        noise_sigma: args.sigma,
        seed: args.seed,
        ..SynthSpec::default()
    };
    let bundle = generate(&spec)?;
    std::fs::create_dir_all(&args.out).map_err(|e| CliError::io(&args.out, e))?;

    let gt_path = args.out.join("gt.json");
    std::fs::write(&gt_path, serialize_orset(&bundle.gt)).map_err(|e| CliError::io(&gt_path, e))?;

    let det_path = args.out.join("detections.jsonl");
    let f = File::create(&det_path).map_err(|e| CliError::io(&det_path, e))?;
    write_detections(BufWriter::new(f), &bundle.detections)
        .map_err(|e| CliError::io(&det_path, e))?;

    let mut cfg = RunConfig {
        detection: Some(DetectionConfig::File {
            path: PathBuf::from("detections.jsonl"),
        }),
        embedding: EmbeddingConfig::Synthetic {
            seed: bundle.provider.seed,
            noise_sigma: bundle.provider.noise_sigma,
            dim: bundle.provider.dim,
        },
        ..RunConfig::default()
    };
    cfg.tracker.dims = spec.dims;
    cfg.metrics.dims = spec.dims;
    let cfg_path = args.out.join("config.toml");
    std::fs::write(&cfg_path, cfg.to_toml()).map_err(|e| CliError::io(&cfg_path, e))?;
    log::info!(
        "wrote {} frames, {} detections to {}",
        bundle.gt.gt.len(),
        bundle.detections.len(),
        args.out.display()
    );
    Ok(())
}
