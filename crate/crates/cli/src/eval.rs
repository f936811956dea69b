use ortrack::ingest::read_orset;
use ortrack::metrics::{self, EvalPair, MetricOptions, ReportFormat, COLUMNS};
use ortrack::tracker::read_results_file;
use serde_json::json;

use crate::config::RunConfig;
use crate::{CliError, EvalArgs};

pub fn run(args: EvalArgs) -> Result<(), CliError> {
    if args.gt.len() != args.pred.len() {
        return Err(CliError::Usage(format!(
            "{} --gt files but {} --pred files",
            args.gt.len(),
            args.pred.len()
        )));
    }
    let mut opts: MetricOptions = match &args.config {
        Some(p) => RunConfig::load(p)?.metrics,
        None => MetricOptions::default(),
    };
    if let Some(m) = args.matching {
        opts.matching = m.into();
    }
    if let Some(m) = args.loca {
        opts.loca = m.into();
    }

    let pairs = args
        .gt
        .iter()
        .zip(&args.pred)
        .map(|(g, p)| {
            Ok(EvalPair {
                gt: read_orset(g)?,
                pred: read_results_file(p)?,
            })
        })
        .collect::<Result<Vec<_>, CliError>>()?;

    let micro = metrics::evaluate(&pairs, &opts)?;
    if micro.no_scored_frames {
        log::warn!("no annotated frames to score");
    } else if micro.zero_tp {
        log::warn!("no true positives at any threshold; LocA reported as 0");
    }
    print!("{}", metrics::report(&micro, ReportFormat::Table));

    let each = if pairs.len() > 1 {
        let each = metrics::evaluate_each(&pairs, &opts)?;
        let header: Vec<String> = COLUMNS.iter().map(|c| format!("{c:>7}")).collect();
        println!("\nper pair:\n{}  scene", header.join(" "));
        for (pair, r) in pairs.iter().zip(&each) {
            println!(
                "{}  {}",
                metrics::render_row(&r.columns()),
                pair.gt.scene_id
            );
        }
        println!(
            "{}  (macro)",
            metrics::render_row(&metrics::macro_average(&each))
        );
        each
    } else {
        vec![micro.clone()]
    };

    if let Some(path) = &args.json {
        let per_pair: Vec<_> = pairs
            .iter()
            .zip(&each)
            .map(|(p, r)| json!({"scene_id": p.gt.scene_id, "description": p.gt.description, "report": r}))
            .collect();
        let macro_avg = (each.len() > 1).then(|| {
            let m = metrics::macro_average(&each);
            COLUMNS
                .iter()
                .zip(m)
                .map(|(c, v)| (c.to_string(), json!(v)))
                .collect::<serde_json::Map<_, _>>()
        });
        let doc = json!({"micro": micro, "per_pair": per_pair, "macro": macro_avg});
        let mut text = serde_json::to_string_pretty(&doc).expect("report serializes");
        text.push('\n');
        std::fs::write(path, text).map_err(|e| CliError::io(path, e))?;
    }
    Ok(())
}
