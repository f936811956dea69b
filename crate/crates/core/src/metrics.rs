//! HOTA-family evaluation (HOTA, DetA, AssA, DetRe, DetPr, AssRe, AssPr, LocA).
//!
//! Per frame, ground truth and predictions are matched one-to-one by a
//! Hungarian solve that maximizes `alignment(gt_id, pred_id) * iou`, where
//! `alignment` is the soft whole-sequence overlap of the two identities. A
//! match counts as a true positive at threshold `a` when its IoU is at least
//! `a`. Scores are computed per threshold and then averaged.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::association::{hungarian, CostMatrix};
use crate::error::{Error, Result};
use crate::geometry::{BoundingBox, FrameDims, IouMode};
use crate::ingest::SceneAnnotation;
use crate::tracker::Trajectory;

/// `0.05, 0.10, ..., 0.95`.
pub fn default_thresholds() -> Vec<f64> {
    (1..=19).map(|k| k as f64 / 20.0).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricOptions {
    pub thresholds: Vec<f64>,
    /// Similarity used for matching.
    pub matching: IouMode,
    /// Similarity averaged into LocA.
    pub loca: IouMode,
    pub dims: FrameDims,
}

impl Default for MetricOptions {
    fn default() -> Self {
        MetricOptions {
            thresholds: default_thresholds(),
            matching: IouMode::Wrap,
            loca: IouMode::Wrap,
            dims: FrameDims::default(),
        }
    }
}

impl MetricOptions {
    fn validate(&self) -> Result<()> {
        if self.thresholds.is_empty() {
            return Err(Error::InvalidArgument(
                "at least one threshold is required".into(),
            ));
        }
        if let Some(t) = self.thresholds.iter().find(|t| !(**t > 0.0 && **t < 1.0)) {
            return Err(Error::InvalidArgument(format!(
                "threshold {t} outside (0, 1)"
            )));
        }
        Ok(())
    }
}

/// Ground truth of one (scene, description) pair and the predictions made
/// for it. Only frames inside the annotated ranges are scored.
#[derive(Debug, Clone)]
pub struct EvalPair {
    pub gt: SceneAnnotation,
    pub pred: Vec<Trajectory>,
}

/// Result of matching a single frame at one threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameMatch {
    /// `(gt index, pred index, similarity)`.
    pub tp: Vec<(usize, usize, f64)>,
    pub fn_: usize,
    pub fp: usize,
}

fn similarity(
    gt: &[BoundingBox],
    pred: &[BoundingBox],
    mode: IouMode,
    dims: &FrameDims,
) -> DMatrix<f64> {
    DMatrix::from_fn(gt.len(), pred.len(), |i, j| {
        mode.similarity(&gt[i], &pred[j], dims)
    })
}

fn max_score_pairs(score: &DMatrix<f64>) -> Vec<(usize, usize)> {
    let cost = CostMatrix::new(score.map(|v| -v)).expect("similarities are finite");
    hungarian(&cost).pairs
}

/// Match one frame without identity information: maximize total similarity,
/// then keep pairs whose similarity reaches `alpha`.
pub fn match_frame(
    gt: &[BoundingBox],
    pred: &[BoundingBox],
    alpha: f64,
    mode: IouMode,
    dims: &FrameDims,
) -> FrameMatch {
    let sim = similarity(gt, pred, mode, dims);
    let tp: Vec<(usize, usize, f64)> = max_score_pairs(&sim)
        .into_iter()
        .map(|(i, j)| (i, j, sim[(i, j)]))
        .filter(|&(_, _, s)| s >= alpha - f64::EPSILON)
        .collect();
    FrameMatch {
        fn_: gt.len() - tp.len(),
        fp: pred.len() - tp.len(),
        tp,
    }
}

/// Additive per-threshold sums. Pooling pairs is plain addition.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Counts {
    pub tp: u64,
    pub fn_: u64,
    pub fp: u64,
    /// Sum of localization similarity over true positives.
    pub loca_sum: f64,
    /// Sum over true positives of `TPA / (TPA + FNA + FPA)`.
    pub ass_a_sum: f64,
    /// Sum over true positives of `TPA / (TPA + FNA)`.
    pub ass_re_sum: f64,
    /// Sum over true positives of `TPA / (TPA + FPA)`.
    pub ass_pr_sum: f64,
}

impl Counts {
    fn add(&mut self, o: &Counts) {
        self.tp += o.tp;
        self.fn_ += o.fn_;
        self.fp += o.fp;
        self.loca_sum += o.loca_sum;
        self.ass_a_sum += o.ass_a_sum;
        self.ass_re_sum += o.ass_re_sum;
        self.ass_pr_sum += o.ass_pr_sum;
    }
}

/// Scores at one threshold, as fractions in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdScores {
    pub alpha: f64,
    pub hota: f64,
    pub det_a: f64,
    pub ass_a: f64,
    pub det_re: f64,
    pub det_pr: f64,
    pub ass_re: f64,
    pub ass_pr: f64,
    pub loc_a: f64,
    pub counts: Counts,
}

impl ThresholdScores {
    fn from_counts(alpha: f64, c: Counts) -> Self {
        let ratio = |n: f64, d: u64| n / (d.max(1) as f64);
        let tp = c.tp as f64;
        let det_a = ratio(tp, c.tp + c.fn_ + c.fp);
        let ass_a = ratio(c.ass_a_sum, c.tp);
        ThresholdScores {
            alpha,
            hota: (det_a * ass_a).sqrt(),
            det_a,
            ass_a,
            det_re: ratio(tp, c.tp + c.fn_),
            det_pr: ratio(tp, c.tp + c.fp),
            ass_re: ratio(c.ass_re_sum, c.tp),
            ass_pr: ratio(c.ass_pr_sum, c.tp),
            loc_a: if c.tp == 0 { 0.0 } else { c.loca_sum / tp },
            counts: c,
        }
    }
}

/// Threshold-averaged scores as percentages, plus the per-threshold detail.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub hota: f64,
    pub det_a: f64,
    pub ass_a: f64,
    pub det_re: f64,
    pub det_pr: f64,
    pub ass_re: f64,
    pub ass_pr: f64,
    pub loc_a: f64,
    pub per_threshold: Vec<ThresholdScores>,
    /// No true positive at any threshold; LocA is reported as 0.
    pub zero_tp: bool,
    /// No frame fell inside any annotated range.
    pub no_scored_frames: bool,
}

impl MetricReport {
    /// Values in table column order.
    pub fn columns(&self) -> [f64; 8] {
        [
            self.hota,
            self.det_a,
            self.ass_a,
            self.det_re,
            self.det_pr,
            self.ass_re,
            self.ass_pr,
            self.loc_a,
        ]
    }

    fn from_counts(thresholds: &[f64], counts: &[Counts], scored_frames: u64) -> Self {
        let per: Vec<ThresholdScores> = thresholds
            .iter()
            .zip(counts)
            .map(|(&a, &c)| ThresholdScores::from_counts(a, c))
            .collect();
        let n = per.len() as f64;
        let mean = |f: fn(&ThresholdScores) -> f64| 100.0 * per.iter().map(f).sum::<f64>() / n;
        MetricReport {
            hota: mean(|s| s.hota),
            det_a: mean(|s| s.det_a),
            ass_a: mean(|s| s.ass_a),
            det_re: mean(|s| s.det_re),
            det_pr: mean(|s| s.det_pr),
            ass_re: mean(|s| s.ass_re),
            ass_pr: mean(|s| s.ass_pr),
            loc_a: mean(|s| s.loc_a),
            zero_tp: counts.iter().all(|c| c.tp == 0),
            no_scored_frames: scored_frames == 0,
            per_threshold: per,
        }
    }
}

struct FrameData {
    gt_ids: Vec<usize>,
    gt_boxes: Vec<BoundingBox>,
    pred_ids: Vec<usize>,
    pred_boxes: Vec<BoundingBox>,
}

fn dense_ids(ids: impl Iterator<Item = u64>) -> BTreeMap<u64, usize> {
    let mut m = BTreeMap::new();
    for id in ids {
        let next = m.len();
        m.entry(id).or_insert(next);
    }
    m
}

/// Per-threshold counts for one pair, plus the number of scored frames.
fn accumulate(pair: &EvalPair, opts: &MetricOptions) -> (Vec<Counts>, u64) {
    let gt = &pair.gt;
    let gt_index = dense_ids(gt.gt.values().flatten().map(|o| o.track_id));
    let pred_index = dense_ids(pair.pred.iter().map(|t| t.id));
    let mut pred_by_frame: BTreeMap<u64, Vec<(usize, BoundingBox)>> = BTreeMap::new();
    for t in &pair.pred {
        let pid = pred_index[&t.id];
        for (&f, &b) in &t.boxes {
            if gt.contains_frame(f) {
                pred_by_frame.entry(f).or_default().push((pid, b));
            }
        }
    }

    let mut frames = Vec::new();
    for f in gt.scored_frames() {
        let (gt_ids, gt_boxes) = gt
            .gt
            .get(&f)
            .map(|objs| objs.iter().map(|o| (gt_index[&o.track_id], o.bbox)).unzip())
            .unwrap_or_default();
        let (pred_ids, pred_boxes) = pred_by_frame
            .remove(&f)
            .map(|v| v.into_iter().unzip())
            .unwrap_or_default();
        frames.push(FrameData {
            gt_ids,
            gt_boxes,
            pred_ids,
            pred_boxes,
        });
    }
    let scored = frames.len() as u64;

    let (ng, np) = (gt_index.len(), pred_index.len());
    let mut potential = DMatrix::<f64>::zeros(ng, np);
    let mut gt_count = vec![0u64; ng];
    let mut pred_count = vec![0u64; np];
    let mut sims = Vec::with_capacity(frames.len());
    for fd in &frames {
        let sim = similarity(&fd.gt_boxes, &fd.pred_boxes, opts.matching, &opts.dims);
        let row_sum: Vec<f64> = sim.row_iter().map(|r| r.sum()).collect();
        let col_sum: Vec<f64> = sim.column_iter().map(|c| c.sum()).collect();
        for (i, &g) in fd.gt_ids.iter().enumerate() {
            for (j, &p) in fd.pred_ids.iter().enumerate() {
                let denom = row_sum[i] + col_sum[j] - sim[(i, j)];
                if denom > f64::EPSILON {
                    potential[(g, p)] += sim[(i, j)] / denom;
                }
            }
        }
        for &g in &fd.gt_ids {
            gt_count[g] += 1;
        }
        for &p in &fd.pred_ids {
            pred_count[p] += 1;
        }
        sims.push(sim);
    }
    let alignment = DMatrix::from_fn(ng, np, |g, p| {
        let denom = gt_count[g] as f64 + pred_count[p] as f64 - potential[(g, p)];
        if denom > 0.0 {
            potential[(g, p)] / denom
        } else {
            0.0
        }
    });

    let nt = opts.thresholds.len();
    let mut counts = vec![Counts::default(); nt];
    let mut matches: Vec<DMatrix<f64>> = vec![DMatrix::zeros(ng, np); nt];
    for (fd, sim) in frames.iter().zip(&sims) {
        let (n_gt, n_pred) = (fd.gt_ids.len() as u64, fd.pred_ids.len() as u64);
        let score = DMatrix::from_fn(sim.nrows(), sim.ncols(), |i, j| {
            alignment[(fd.gt_ids[i], fd.pred_ids[j])] * sim[(i, j)]
        });
        let pairs = max_score_pairs(&score);
        for (a, &alpha) in opts.thresholds.iter().enumerate() {
            let c = &mut counts[a];
            let mut tp = 0;
            for &(i, j) in &pairs {
                if sim[(i, j)] >= alpha - f64::EPSILON {
                    tp += 1;
                    c.loca_sum += if opts.loca == opts.matching {
                        sim[(i, j)]
                    } else {
                        opts.loca
                            .similarity(&fd.gt_boxes[i], &fd.pred_boxes[j], &opts.dims)
                    };
                    matches[a][(fd.gt_ids[i], fd.pred_ids[j])] += 1.0;
                }
            }
            c.tp += tp;
            c.fn_ += n_gt - tp;
            c.fp += n_pred - tp;
        }
    }

    for (c, m) in counts.iter_mut().zip(&matches) {
        for g in 0..ng {
            for p in 0..np {
                let tpa = m[(g, p)];
                if tpa == 0.0 {
                    continue;
                }
                let (gc, pc) = (gt_count[g] as f64, pred_count[p] as f64);
                c.ass_a_sum += tpa * tpa / (gc + pc - tpa);
                c.ass_re_sum += tpa * tpa / gc;
                c.ass_pr_sum += tpa * tpa / pc;
            }
        }
    }
    (counts, scored)
}

/// Pooled (micro-averaged) report over all pairs.
pub fn evaluate(pairs: &[EvalPair], opts: &MetricOptions) -> Result<MetricReport> {
    if pairs.is_empty() {
        return Err(Error::InvalidArgument("nothing to evaluate".into()));
    }
    opts.validate()?;
    let per_pair: Vec<(Vec<Counts>, u64)> = {
        use rayon::prelude::*;
        pairs.par_iter().map(|p| accumulate(p, opts)).collect()
    };
    let mut total = vec![Counts::default(); opts.thresholds.len()];
    let mut scored = 0;
    for (counts, n) in &per_pair {
        for (t, c) in total.iter_mut().zip(counts) {
            t.add(c);
        }
        scored += n;
    }
    if scored == 0 {
        log::warn!("no annotated frames to score; reporting zeros");
    }
    Ok(MetricReport::from_counts(&opts.thresholds, &total, scored))
}

/// One report per pair, in input order.
pub fn evaluate_each(pairs: &[EvalPair], opts: &MetricOptions) -> Result<Vec<MetricReport>> {
    pairs
        .iter()
        .map(|p| evaluate(std::slice::from_ref(p), opts))
        .collect()
}

/// Unweighted mean of the headline scores of several reports.
pub fn macro_average(reports: &[MetricReport]) -> [f64; 8] {
    let mut out = [0.0; 8];
    if reports.is_empty() {
        return out;
    }
    for r in reports {
        for (o, v) in out.iter_mut().zip(r.columns()) {
            *o += v;
        }
    }
    out.map(|v| v / reports.len() as f64)
}

pub const COLUMNS: [&str; 8] = [
    "HOTA", "DetA", "AssA", "DetRe", "DetPr", "AssRe", "AssPr", "LocA",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Table,
    Json,
}

pub fn render_row(values: &[f64; 8]) -> String {
    values
        .iter()
        .map(|v| format!("{v:>7.2}"))
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn report(r: &MetricReport, format: ReportFormat) -> String {
    match format {
        ReportFormat::Table => {
            let header = COLUMNS
                .iter()
                .map(|c| format!("{c:>7}"))
                .collect::<Vec<_>>()
                .join(" ");
            format!("{header}\n{}\n", render_row(&r.columns()))
        }
        ReportFormat::Json => {
            let mut s = serde_json::to_string_pretty(r).expect("report serializes");
            s.push('\n');
            s
        }
    }
}
