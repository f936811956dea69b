//! Frame-by-frame tracking: crop embedding, association and track lifecycle.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::association::associate;
use crate::error::{Error, Result};
use crate::features::{fuse, EmbeddingProvider, FeatureVec};
use crate::geometry::{expand_box, local_region, BoundingBox, FrameDims};
use crate::ingest::{Detection, DetectionSource, FrameRef};

/// How a tracklet's reference feature follows its matches.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum FeatureMemory {
    /// Replace with the latest matched feature.
    #[default]
    Last,
    /// `f = beta * f_new + (1 - beta) * f_old`.
    Ema { beta: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackerConfig {
    /// Margin ratio for the context crop.
    pub alpha: f64,
    /// Weight of the context feature in the fused descriptor.
    pub lambda: f64,
    /// Minimum cosine similarity for a match; `-1` disables gating.
    pub theta: f64,
    /// Consecutive misses after which a tracklet is terminated.
    pub tau_max: u32,
    pub feature_memory: FeatureMemory,
    pub dims: FrameDims,
    /// Abort on detection failures instead of treating the frame as empty.
    pub strict: bool,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        TrackerConfig {
            alpha: 1.2,
            lambda: 0.5,
            theta: 0.3,
            tau_max: 30,
            feature_memory: FeatureMemory::Last,
            dims: FrameDims::default(),
            strict: false,
        }
    }
}

impl TrackerConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if !self.alpha.is_finite() || self.alpha < 1.0 {
            return bad(format!("alpha must be >= 1, got {}", self.alpha));
        }
        if !self.lambda.is_finite() || self.lambda < 0.0 {
            return bad(format!("lambda must be >= 0, got {}", self.lambda));
        }
        if !self.theta.is_finite() {
            return bad("theta must be finite".into());
        }
        if self.tau_max < 1 {
            return bad("tau_max must be >= 1".into());
        }
        if let FeatureMemory::Ema { beta } = self.feature_memory {
            if !(beta > 0.0 && beta <= 1.0) {
                return bad(format!("ema beta must be in (0, 1], got {beta}"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrackState {
    Active,
    Terminated,
}

#[derive(Debug, Clone)]
pub struct Tracklet {
    pub id: u64,
    pub feature: FeatureVec,
    pub boxes: BTreeMap<u64, BoundingBox>,
    pub miss_count: u32,
    pub state: TrackState,
}

/// Finalized output track. Frames where the track was missed are absent.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub id: u64,
    pub boxes: BTreeMap<u64, BoundingBox>,
}

impl Trajectory {
    pub fn start(&self) -> Option<u64> {
        self.boxes.keys().next().copied()
    }

    pub fn end(&self) -> Option<u64> {
        self.boxes.keys().next_back().copied()
    }
}

/// Fused descriptor of one detection: target crop plus `lambda` times the
/// margin-expanded context crop.
pub fn embed_detection(
    frame: &FrameRef,
    det: &Detection,
    cfg: &TrackerConfig,
    provider: &dyn EmbeddingProvider,
) -> Result<FeatureVec> {
    let local = local_region(&det.bbox, &cfg.dims)?.with_provenance(det.provenance);
    let global = expand_box(&det.bbox, cfg.alpha, &cfg.dims)?.with_provenance(det.provenance);
    let f_local = provider.embed(frame, &local)?;
    let f_global = provider.embed(frame, &global)?;
    fuse(&f_local, &f_global, cfg.lambda)
}

/// Online tracker state. Ids start at 1 and are never reused.
#[derive(Debug, Clone)]
pub struct Tracker {
    cfg: TrackerConfig,
    next_id: u64,
    last_frame: Option<u64>,
    active: Vec<Tracklet>,
    terminated: Vec<Tracklet>,
}

impl Tracker {
    pub fn new(cfg: TrackerConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Tracker {
            cfg,
            next_id: 1,
            last_frame: None,
            active: Vec::new(),
            terminated: Vec::new(),
        })
    }

    pub fn config(&self) -> &TrackerConfig {
        &self.cfg
    }

    pub fn active(&self) -> &[Tracklet] {
        &self.active
    }

    pub fn terminated(&self) -> &[Tracklet] {
        &self.terminated
    }

    /// Advance by one frame. Returns `(track id, box)` for every detection,
    /// in detection order.
    pub fn step(
        &mut self,
        frame: u64,
        dets: &[Detection],
        feats: &[FeatureVec],
    ) -> Result<Vec<(u64, BoundingBox)>> {
        if dets.len() != feats.len() {
            return Err(Error::InvalidArgument(format!(
                "{} detections but {} features",
                dets.len(),
                feats.len()
            )));
        }
        if self.last_frame.is_some_and(|last| frame <= last) {
            return Err(Error::InvalidArgument(format!(
                "frame {frame} does not follow frame {}",
                self.last_frame.unwrap_or_default()
            )));
        }
        self.last_frame = Some(frame);

        let track_feats: Vec<FeatureVec> = self.active.iter().map(|t| t.feature.clone()).collect();
        let assignment = associate(&track_feats, feats, self.cfg.theta)?;

        let mut out: Vec<Option<u64>> = vec![None; dets.len()];
        for &(ti, di) in &assignment.pairs {
            let track = &mut self.active[ti];
            track.boxes.insert(frame, dets[di].bbox);
            track.miss_count = 0;
            track.feature = match self.cfg.feature_memory {
                FeatureMemory::Last => feats[di].clone(),
                FeatureMemory::Ema { beta } => {
                    fuse(&feats[di].scaled(beta), &track.feature, 1.0 - beta)?
                }
            };
            out[di] = Some(track.id);
        }
        for &ti in &assignment.unmatched_tracks {
            let track = &mut self.active[ti];
            track.miss_count += 1;
            if track.miss_count >= self.cfg.tau_max {
                track.state = TrackState::Terminated;
            }
        }
        let (still_active, ended): (Vec<_>, Vec<_>) = self
            .active
            .drain(..)
            .partition(|t| t.state == TrackState::Active);
        self.active = still_active;
        self.terminated.extend(ended);

        for &di in &assignment.unmatched_dets {
            let id = self.next_id;
            self.next_id += 1;
            self.active.push(Tracklet {
                id,
                feature: feats[di].clone(),
                boxes: BTreeMap::from([(frame, dets[di].bbox)]),
                miss_count: 0,
                state: TrackState::Active,
            });
            out[di] = Some(id);
        }

        Ok(out
            .into_iter()
            .zip(dets)
            .map(|(id, d)| (id.expect("every detection is matched or spawned"), d.bbox))
            .collect())
    }

    /// Close every tracklet and return trajectories sorted by id.
    pub fn finish(self) -> Vec<Trajectory> {
        let mut all: Vec<Trajectory> = self
            .terminated
            .into_iter()
            .chain(self.active)
            .map(|t| Trajectory {
                id: t.id,
                boxes: t.boxes,
            })
            .collect();
        all.sort_by_key(|t| t.id);
        all
    }
}

/// Track `description` over `frames` (ascending).
pub fn run(
    frames: &[FrameRef],
    description: &str,
    source: &dyn DetectionSource,
    provider: &dyn EmbeddingProvider,
    cfg: &TrackerConfig,
) -> Result<Vec<Trajectory>> {
    let mut tracker = Tracker::new(cfg.clone())?;
    for frame in frames {
        let dets = match source.detect(frame, description) {
            Ok(d) => d,
            Err(e) if !cfg.strict => {
                log::warn!(
                    "detection failed on frame {}: {e}; treating as empty",
                    frame.index
                );
                Vec::new()
            }
            Err(e) => return Err(e),
        };
        let feats = dets
            .par_iter()
            .map(|d| embed_detection(frame, d, cfg, provider))
            .collect::<Result<Vec<_>>>()?;
        tracker.step(frame.index, &dets, &feats)?;
    }
    Ok(tracker.finish())
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ResultRecord {
    frame: u64,
    id: u64,
    bbox: [f64; 4],
}

/// JSON lines `{"frame", "id", "bbox"}` sorted by `(frame, id)`.
pub fn write_results<W: Write>(mut out: W, trajectories: &[Trajectory]) -> std::io::Result<()> {
    let mut rows: Vec<(u64, u64, BoundingBox)> = trajectories
        .iter()
        .flat_map(|t| t.boxes.iter().map(move |(&f, &b)| (f, t.id, b)))
        .collect();
    rows.sort_by_key(|&(f, id, _)| (f, id));
    for (frame, id, b) in rows {
        serde_json::to_writer(
            &mut out,
            &ResultRecord {
                frame,
                id,
                bbox: b.into(),
            },
        )?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

pub fn read_results<R: BufRead>(reader: R) -> Result<Vec<Trajectory>> {
    let mut by_id: BTreeMap<u64, BTreeMap<u64, BoundingBox>> = BTreeMap::new();
    for (i, line) in reader.lines().enumerate() {
        let bad = |message: String| Error::Line {
            line: i + 1,
            message,
        };
        let line = line.map_err(|e| bad(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: ResultRecord =
            serde_json::from_str(&line).map_err(|e| bad(format!("malformed result ({e})")))?;
        let b = BoundingBox::try_from(rec.bbox).map_err(|e| bad(e.to_string()))?;
        if by_id
            .entry(rec.id)
            .or_default()
            .insert(rec.frame, b)
            .is_some()
        {
            return Err(bad(format!(
                "duplicate box for id {} at frame {}",
                rec.id, rec.frame
            )));
        }
    }
    Ok(by_id
        .into_iter()
        .map(|(id, boxes)| Trajectory { id, boxes })
        .collect())
}

pub fn read_results_file(path: &std::path::Path) -> Result<Vec<Trajectory>> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_results(std::io::BufReader::new(f))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::SyntheticProvider;
    use crate::ingest::{DetectionOrigin, DetectionTable};

    fn det(frame: u64, x: f64, id: u64) -> Detection {
        Detection {
            frame,
            bbox: BoundingBox::new(x, 100.0, x + 40.0, 200.0).unwrap(),
            score: None,
            origin: DetectionOrigin::Synthetic,
            provenance: Some(id),
        }
    }

    fn cfg(tau_max: u32) -> TrackerConfig {
        TrackerConfig {
            tau_max,
            ..TrackerConfig::default()
        }
    }

    #[test]
    fn defaults_match_published_settings() {
        let c = TrackerConfig::default();
        assert_eq!((c.alpha, c.lambda), (1.2, 0.5));
        assert_eq!((c.theta, c.tau_max), (0.3, 30));
        assert_eq!(c.feature_memory, FeatureMemory::Last);
        assert!(c.validate().is_ok());
        assert!(TrackerConfig {
            alpha: 0.9,
            ..c.clone()
        }
        .validate()
        .is_err());
        assert!(TrackerConfig {
            tau_max: 0,
            ..c.clone()
        }
        .validate()
        .is_err());
        assert!(TrackerConfig {
            feature_memory: FeatureMemory::Ema { beta: 0.0 },
            ..c
        }
        .validate()
        .is_err());
    }

    #[test]
    fn embed_detection_oracle_arithmetic() {
        let p = SyntheticProvider::new(1, 0.0, 8).unwrap();
        let d = det(0, 500.0, 2);
        let f = embed_detection(&FrameRef::new(0), &d, &TrackerConfig::default(), &p).unwrap();
        assert_eq!(f, p.base(2).scaled(1.5));

        let local_only = TrackerConfig {
            lambda: 0.0,
            ..TrackerConfig::default()
        };
        let f = embed_detection(&FrameRef::new(0), &d, &local_only, &p).unwrap();
        assert_eq!(f, p.base(2));

        // alpha 1: both crops are the same region, so f = (1 + lambda) * embed(box)
        let noisy = SyntheticProvider::new(1, 0.4, 8).unwrap();
        let same = TrackerConfig {
            alpha: 1.0,
            lambda: 0.7,
            ..TrackerConfig::default()
        };
        let f = embed_detection(&FrameRef::new(3), &d, &same, &noisy).unwrap();
        let region = local_region(&d.bbox, &same.dims)
            .unwrap()
            .with_provenance(Some(2));
        let e = noisy.embed(&FrameRef::new(3), &region).unwrap().scaled(1.7);
        for (a, b) in f.values().iter().zip(e.values()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn new_tracklets_get_sequential_ids() {
        let p = SyntheticProvider::new(0, 0.0, 8).unwrap();
        let c = cfg(30);
        let mut t = Tracker::new(c.clone()).unwrap();
        let dets = vec![det(0, 0.0, 1), det(0, 100.0, 2)];
        let feats: Vec<_> = dets
            .iter()
            .map(|d| embed_detection(&FrameRef::new(0), d, &c, &p).unwrap())
            .collect();
        let out = t.step(0, &dets, &feats).unwrap();
        assert_eq!(out.iter().map(|o| o.0).collect::<Vec<_>>(), vec![1, 2]);
        assert!(t.step(0, &[], &[]).is_err());
        assert!(t.step(1, &dets, &[]).is_err());
    }

    #[test]
    fn track_terminates_after_tau_max_misses() {
        let mut t = Tracker::new(cfg(2)).unwrap();
        let f = FeatureVec::basis(4, 0);
        t.step(0, &[det(0, 0.0, 1)], &[f]).unwrap();
        t.step(1, &[], &[]).unwrap();
        assert_eq!(t.active().len(), 1);
        t.step(2, &[], &[]).unwrap();
        assert!(t.active().is_empty());
        assert_eq!(t.terminated().len(), 1);
        assert_eq!(t.terminated()[0].state, TrackState::Terminated);
    }

    #[test]
    fn match_by_appearance_and_spawn_the_rest() {
        let mut t = Tracker::new(cfg(30)).unwrap();
        t.step(0, &[det(0, 0.0, 0)], &[FeatureVec::basis(4, 0)])
            .unwrap();
        let out = t
            .step(
                1,
                &[det(1, 300.0, 1), det(1, 10.0, 0)],
                &[FeatureVec::basis(4, 1), FeatureVec::basis(4, 0)],
            )
            .unwrap();
        assert_eq!(out[1].0, 1);
        assert_eq!(out[0].0, 2);
    }

    #[test]
    fn terminated_tracks_never_reacquire() {
        let mut t = Tracker::new(cfg(1)).unwrap();
        let f = FeatureVec::basis(4, 0);
        t.step(0, &[det(0, 0.0, 0)], std::slice::from_ref(&f))
            .unwrap();
        t.step(1, &[], &[]).unwrap();
        let out = t.step(2, &[det(2, 0.0, 0)], &[f]).unwrap();
        assert_eq!(out[0].0, 2);
        let trajs = t.finish();
        assert_eq!(trajs.len(), 2);
    }

    #[test]
    fn ema_memory_blends_features() {
        let c = TrackerConfig {
            feature_memory: FeatureMemory::Ema { beta: 0.25 },
            ..cfg(30)
        };
        let mut t = Tracker::new(c).unwrap();
        let a = FeatureVec::new(vec![1.0, 0.0]).unwrap();
        let b = FeatureVec::new(vec![1.0, 1.0]).unwrap();
        t.step(0, &[det(0, 0.0, 0)], &[a]).unwrap();
        t.step(1, &[det(1, 0.0, 0)], &[b]).unwrap();
        assert_eq!(t.active()[0].feature.values(), &[1.0, 0.25]);
    }

    fn scene(n_ids: u64, frames: u64) -> (Vec<FrameRef>, DetectionTable) {
        let mut table = DetectionTable::default();
        for f in 0..frames {
            for id in 0..n_ids {
                table.push(det(f, 200.0 * id as f64 + f as f64, id));
            }
        }
        ((0..frames).map(FrameRef::new).collect(), table)
    }

    #[test]
    fn run_end_to_end_oracle() {
        let p = SyntheticProvider::new(0, 0.0, 16).unwrap();
        let (frames, table) = scene(3, 50);
        let trajs = run(&frames, "people", &table, &p, &TrackerConfig::default()).unwrap();
        assert_eq!(trajs.len(), 3);
        for (k, t) in trajs.iter().enumerate() {
            assert_eq!(t.boxes.len(), 50);
            for (&f, b) in &t.boxes {
                assert_eq!(*b, det(f, 200.0 * k as f64 + f as f64, k as u64).bbox);
            }
        }
        assert!(run(&[], "people", &table, &p, &TrackerConfig::default())
            .unwrap()
            .is_empty());
    }

    #[test]
    fn seam_crossing_keeps_one_identity() {
        // object moves left across x = 0, is missed for 3 frames at the seam
        // and reappears at the right edge
        let p = SyntheticProvider::new(0, 0.0, 16).unwrap();
        let mut table = DetectionTable::default();
        let mut frames = Vec::new();
        for f in 0..20u64 {
            frames.push(FrameRef::new(f));
            let x = 100.0 - 12.0 * f as f64;
            if (8..11).contains(&f) {
                continue;
            }
            let x = if x < 0.0 { x + 3760.0 } else { x };
            let x2 = (x + 40.0).min(3760.0);
            table.push(Detection {
                bbox: BoundingBox::new(x, 100.0, x2, 200.0).unwrap(),
                ..det(f, 0.0, 5)
            });
        }
        let trajs = run(&frames, "walker", &table, &p, &cfg(5)).unwrap();
        assert_eq!(trajs.len(), 1);
        assert_eq!(trajs[0].boxes.len(), 17);
    }

    struct Failing;
    impl DetectionSource for Failing {
        fn detect(&self, _: &FrameRef, _: &str) -> Result<Vec<Detection>> {
            Err(Error::Status(503))
        }
    }

    #[test]
    fn detection_failures_follow_strict_mode() {
        let p = SyntheticProvider::new(0, 0.0, 4).unwrap();
        let frames = [FrameRef::new(0)];
        assert!(run(&frames, "x", &Failing, &p, &TrackerConfig::default())
            .unwrap()
            .is_empty());
        let strict = TrackerConfig {
            strict: true,
            ..TrackerConfig::default()
        };
        assert!(matches!(
            run(&frames, "x", &Failing, &p, &strict),
            Err(Error::Status(503))
        ));
    }

    #[test]
    fn results_are_sorted_and_round_trip() {
        let p = SyntheticProvider::new(0, 0.0, 16).unwrap();
        let (frames, table) = scene(3, 4);
        let trajs = run(&frames, "people", &table, &p, &TrackerConfig::default()).unwrap();
        let mut a = Vec::new();
        write_results(&mut a, &trajs).unwrap();
        let mut b = Vec::new();
        write_results(
            &mut b,
            &run(&frames, "people", &table, &p, &TrackerConfig::default()).unwrap(),
        )
        .unwrap();
        assert_eq!(a, b);
        let text = String::from_utf8(a.clone()).unwrap();
        let first: Vec<&str> = text.lines().take(2).collect();
        assert!(first[0].starts_with("{\"frame\":0,\"id\":1,"));
        assert!(first[1].starts_with("{\"frame\":0,\"id\":2,"));
        assert_eq!(read_results(a.as_slice()).unwrap(), trajs);

        let mut empty = Vec::new();
        write_results(&mut empty, &[]).unwrap();
        assert!(empty.is_empty());
    }
}
