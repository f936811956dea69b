//! Synthetic scenes with known ground truth, for closed-loop testing.
//!
//! Every identity moves at the same constant horizontal velocity, so objects
//! never overlap. Positions wrap modulo the frame width. A box straddling the
//! seam is annotated with `x2 > W` and detected with `x1 < 0`, i.e. the two
//! sides use different but equivalent representations of the same object.

use serde::{Deserialize, Serialize};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::features::{SyntheticProvider, DEFAULT_DIM};
use crate::geometry::{BoundingBox, FrameDims};
use crate::ingest::{
    Detection, DetectionOrigin, DetectionTable, FrameRange, GtObject, SceneAnnotation,
};

pub const BOX_WIDTH: f64 = 60.0;
pub const BOX_HEIGHT: f64 = 120.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Motion {
    /// Objects laid out so they stay clear of the seam when space allows.
    #[default]
    Linear,
    /// Like `Linear`, shifted so the first object's center crosses the seam
    /// halfway through the sequence.
    Seam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    pub objects: usize,
    pub frames: u64,
    pub start_frame: u64,
    pub motion: Motion,
    pub noise_sigma: f64,
    pub seed: u64,
    pub dim: usize,
    pub dims: FrameDims,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            objects: 10,
            frames: 200,
            start_frame: 0,
            motion: Motion::Linear,
            noise_sigma: 0.0,
            seed: 0,
            dim: DEFAULT_DIM,
            dims: FrameDims::default(),
        }
    }
}

/// Embedding oracle settings shipped alongside a synthetic scene.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticProviderSpec {
    pub seed: u64,
    pub noise_sigma: f64,
    pub dim: usize,
}

impl SyntheticProviderSpec {
    pub fn build(&self) -> Result<SyntheticProvider> {
        SyntheticProvider::new(self.seed, self.noise_sigma, self.dim)
    }
}

#[derive(Debug, Clone)]
pub struct SynthBundle {
    pub gt: SceneAnnotation,
    pub detections: DetectionTable,
    pub provider: SyntheticProviderSpec,
}

pub const DESCRIPTION: &str = "people walking around the camera";

pub fn generate(spec: &SynthSpec) -> Result<SynthBundle> {
    if spec.objects == 0 || spec.frames == 0 {
        return Err(Error::InvalidArgument(
            "need at least one object and one frame".into(),
        ));
    }
    let w = spec.dims.width();
    if spec.dims.height() < 3.0 * 100.0 + BOX_HEIGHT || (spec.objects as f64) * BOX_WIDTH * 1.5 > w
    {
        return Err(Error::InvalidArgument(format!(
            "{} objects do not fit in a {}x{} frame",
            spec.objects,
            w,
            spec.dims.height()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let speed: f64 = rng.random_range(0.5..1.5);
    let v = if rng.random_bool(0.5) { speed } else { -speed };
    let travel = v.abs() * (spec.frames - 1) as f64;
    let free = (w - BOX_WIDTH - travel).max(BOX_WIDTH * 1.5 * spec.objects as f64);
    let spacing = free / spec.objects as f64;
    let base = if v > 0.0 { 0.0 } else { travel };
    let mut x0: Vec<f64> = (0..spec.objects)
        .map(|k| base + k as f64 * spacing)
        .collect();
    if spec.motion == Motion::Seam {
        let mid = (spec.frames / 2) as f64;
        let center = x0[0] + BOX_WIDTH / 2.0 + v * mid;
        let shift = (w - center).rem_euclid(w);
        for x in &mut x0 {
            *x += shift;
        }
    }

    let last = spec.start_frame + spec.frames - 1;
    let mut gt = SceneAnnotation {
        scene_id: format!("synth-{}", spec.seed),
        frame_ranges: vec![FrameRange {
            start: spec.start_frame,
            end: last,
        }],
        description: DESCRIPTION.to_string(),
        gt: Default::default(),
    };
    let mut detections = DetectionTable::default();
    for t in 0..spec.frames {
        let frame = spec.start_frame + t;
        let mut objs = Vec::with_capacity(spec.objects);
        for (k, &start) in x0.iter().enumerate() {
            let id = k as u64 + 1;
            let x = (start + v * t as f64).rem_euclid(w);
            let y1 = 60.0 + (k % 3) as f64 * 100.0;
            let annotated = BoundingBox::new(x, y1, x + BOX_WIDTH, y1 + BOX_HEIGHT)?;
            let detected = if annotated.x2 > w {
                annotated.translate_x(-w)
            } else {
                annotated
            };
            objs.push(GtObject {
                track_id: id,
                bbox: annotated,
            });
            detections.push(Detection {
                frame,
                bbox: detected,
                score: Some(1.0),
                origin: DetectionOrigin::Synthetic,
                provenance: Some(id),
            });
        }
        gt.gt.insert(frame, objs);
    }
    Ok(SynthBundle {
        gt,
        detections,
        provider: SyntheticProviderSpec {
            seed: spec.seed,
            noise_sigma: spec.noise_sigma,
            dim: spec.dim,
        },
    })
}
