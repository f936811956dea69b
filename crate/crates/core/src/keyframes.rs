//! Keyframe selection by frame-difference peak detection.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Mean absolute difference between consecutive frames.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffSignal(Vec<f64>);

impl DiffSignal {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(v) = values.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::InvalidArgument(format!(
                "difference signal values must be finite and non-negative, got {v}"
            )));
        }
        Ok(DiffSignal(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// `values[t] = mean |frame[t+1] - frame[t]|`. Frames are flat grayscale
/// arrays (or one-element summaries) of equal length.
pub fn frame_diff<F: AsRef<[f64]>>(frames: &[F]) -> Result<DiffSignal> {
    if frames.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 frames, got {}",
            frames.len()
        )));
    }
    let n = frames[0].as_ref().len();
    if n == 0 {
        return Err(Error::InvalidArgument("frames must not be empty".into()));
    }
    if let Some((i, f)) = frames
        .iter()
        .enumerate()
        .find(|(_, f)| f.as_ref().len() != n)
    {
        return Err(Error::InvalidArgument(format!(
            "frame {i} has {} values, expected {n}",
            f.as_ref().len()
        )));
    }
    let values = frames
        .windows(2)
        .map(|w| {
            let (a, b) = (w[0].as_ref(), w[1].as_ref());
            a.iter().zip(b).map(|(x, y)| (y - x).abs()).sum::<f64>() / n as f64
        })
        .collect();
    DiffSignal::new(values)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KeyframeParams {
    /// Odd moving-average window.
    pub smooth_w: usize,
    /// Threshold is `mean + k * stddev` of the smoothed signal.
    pub k: f64,
    /// Peaks within this many frames of a taller accepted peak are dropped.
    pub d_min: usize,
}

impl Default for KeyframeParams {
    fn default() -> Self {
        KeyframeParams {
            smooth_w: 5,
            k: 1.0,
            d_min: 15,
        }
    }
}

/// Centered moving average; the window is truncated at the ends.
pub fn smooth(values: &[f64], window: usize) -> Vec<f64> {
    let half = window / 2;
    (0..values.len())
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half + 1).min(values.len());
            values[lo..hi].iter().sum::<f64>() / (hi - lo) as f64
        })
        .collect()
}

/// `mean + k * population stddev`.
pub fn adaptive_threshold(values: &[f64], k: f64) -> f64 {
    if values.is_empty() {
        return f64::INFINITY;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    mean + k * var.sqrt()
}

fn is_strict_local_max(s: &[f64], i: usize) -> bool {
    let left = i == 0 || s[i] > s[i - 1];
    let right = i + 1 == s.len() || s[i] > s[i + 1];
    left && right && s.len() > 1
}

/// Indices of keyframe peaks, ascending.
pub fn select_keyframes(signal: &DiffSignal, params: &KeyframeParams) -> Result<Vec<usize>> {
    if params.smooth_w == 0 || params.smooth_w.is_multiple_of(2) {
        return Err(Error::InvalidArgument(format!(
            "smoothing window must be odd and >= 1, got {}",
            params.smooth_w
        )));
    }
    if !params.k.is_finite() {
        return Err(Error::InvalidArgument(
            "threshold multiplier must be finite".into(),
        ));
    }
    let s = smooth(signal.values(), params.smooth_w);
    let threshold = adaptive_threshold(&s, params.k);
    let mut candidates: Vec<usize> = (0..s.len())
        .filter(|&i| s[i] > threshold && is_strict_local_max(&s, i))
        .collect();
    // tallest first; equal heights keep the earlier frame
    candidates.sort_by(|&a, &b| s[b].total_cmp(&s[a]).then(a.cmp(&b)));
    let mut accepted: Vec<usize> = Vec::new();
    for c in candidates {
        if accepted.iter().all(|&a| a.abs_diff(c) > params.d_min) {
            accepted.push(c);
        }
    }
    accepted.sort_unstable();
    Ok(accepted)
}
