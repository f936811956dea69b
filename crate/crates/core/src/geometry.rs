//! Box arithmetic on equirectangular frames.
//!
//! The left and right image edges of an equirectangular panorama are the same
//! meridian, so horizontal extents wrap modulo the frame width while vertical
//! extents clamp at the poles. A [`BoundingBox`] may be stored in unwrapped
//! form (`x1 < 0` or `x2 > W`) when an object straddles the seam; converting it
//! to a [`WrapRegion`] splits it into in-frame pieces.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Frame size in pixels. Defaults to the 3760 x 480 panoramas the tracker was
/// designed around.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawDims", into = "RawDims")]
pub struct FrameDims {
    width: f64,
    height: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDims {
    width: f64,
    height: f64,
}

impl TryFrom<RawDims> for FrameDims {
    type Error = Error;
    fn try_from(raw: RawDims) -> Result<Self> {
        FrameDims::new(raw.width, raw.height)
    }
}

impl From<FrameDims> for RawDims {
    fn from(d: FrameDims) -> Self {
        RawDims {
            width: d.width,
            height: d.height,
        }
    }
}

impl Default for FrameDims {
    fn default() -> Self {
        FrameDims {
            width: 3760.0,
            height: 480.0,
        }
    }
}

impl FrameDims {
    pub fn new(width: f64, height: f64) -> Result<Self> {
        if !(width.is_finite() && height.is_finite()) || width <= 0.0 || height <= 0.0 {
            return Err(Error::InvalidGeometry(format!(
                "frame dimensions must be positive and finite, got {width}x{height}"
            )));
        }
        Ok(FrameDims { width, height })
    }

    pub fn width(&self) -> f64 {
        self.width
    }

    pub fn height(&self) -> f64 {
        self.height
    }
}

/// Axis-aligned box in corner form, pixel units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct BoundingBox {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
}

impl TryFrom<[f64; 4]> for BoundingBox {
    type Error = Error;
    fn try_from(v: [f64; 4]) -> Result<Self> {
        BoundingBox::new(v[0], v[1], v[2], v[3])
    }
}

impl From<BoundingBox> for [f64; 4] {
    fn from(b: BoundingBox) -> Self {
        [b.x1, b.y1, b.x2, b.y2]
    }
}

impl BoundingBox {
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Result<Self> {
        if ![x1, y1, x2, y2].iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidGeometry(format!(
                "non-finite box [{x1}, {y1}, {x2}, {y2}]"
            )));
        }
        if x1 > x2 {
            return Err(Error::InvalidGeometry(format!("x1>x2 ({x1} > {x2})")));
        }
        if y1 > y2 {
            return Err(Error::InvalidGeometry(format!("y1>y2 ({y1} > {y2})")));
        }
        Ok(BoundingBox { x1, y1, x2, y2 })
    }

    pub fn width(&self) -> f64 {
        self.x2 - self.x1
    }

    pub fn height(&self) -> f64 {
        self.y2 - self.y1
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn center(&self) -> (f64, f64) {
        ((self.x1 + self.x2) / 2.0, (self.y1 + self.y2) / 2.0)
    }

    pub fn translate_x(&self, dx: f64) -> BoundingBox {
        BoundingBox {
            x1: self.x1 + dx,
            x2: self.x2 + dx,
            ..*self
        }
    }

    pub fn is_within(&self, dims: &FrameDims) -> bool {
        self.x1 >= 0.0 && self.y1 >= 0.0 && self.x2 <= dims.width && self.y2 <= dims.height
    }

    /// Clamp into `[0, W] x [0, H]`. Boxes entirely outside collapse onto the
    /// nearest edge.
    pub fn clamp_to(&self, dims: &FrameDims) -> BoundingBox {
        let cx = |v: f64| v.clamp(0.0, dims.width);
        let cy = |v: f64| v.clamp(0.0, dims.height);
        BoundingBox {
            x1: cx(self.x1),
            y1: cy(self.y1),
            x2: cx(self.x2),
            y2: cy(self.y2),
        }
    }

    fn intersection_area(&self, other: &BoundingBox) -> f64 {
        let w = self.x2.min(other.x2) - self.x1.max(other.x1);
        let h = self.y2.min(other.y2) - self.y1.max(other.y1);
        if w <= 0.0 || h <= 0.0 {
            0.0
        } else {
            w * h
        }
    }
}

/// A crop region on the panorama: one piece, or two when it crosses the
/// `x = 0 / x = W` seam. Pieces are ordered by `x1`.
#[derive(Debug, Clone, PartialEq)]
pub struct WrapRegion {
    pieces: Vec<BoundingBox>,
    dims: FrameDims,
    provenance: Option<u64>,
}

impl WrapRegion {
    pub fn pieces(&self) -> &[BoundingBox] {
        &self.pieces
    }

    pub fn dims(&self) -> FrameDims {
        self.dims
    }

    /// Ground-truth identity carried along from a synthetic detection, if any.
    pub fn provenance(&self) -> Option<u64> {
        self.provenance
    }

    pub fn with_provenance(mut self, provenance: Option<u64>) -> Self {
        self.provenance = provenance;
        self
    }

    pub fn is_split(&self) -> bool {
        self.pieces.len() == 2
    }

    pub fn area(&self) -> f64 {
        self.pieces.iter().map(BoundingBox::area).sum()
    }

    /// Total horizontal extent covered by the pieces.
    pub fn width(&self) -> f64 {
        self.pieces.iter().map(BoundingBox::width).sum()
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !alpha.is_finite() {
        return Err(Error::InvalidGeometry(format!(
            "non-finite margin ratio {alpha}"
        )));
    }
    if alpha < 1.0 {
        return Err(Error::InvalidGeometry(format!("margin ratio {alpha} < 1")));
    }
    Ok(())
}

fn check_vertical(b: &BoundingBox, dims: &FrameDims) -> Result<()> {
    if b.y1 < 0.0 || b.y2 > dims.height {
        return Err(Error::InvalidGeometry(format!(
            "box y-range [{}, {}] outside frame height {}",
            b.y1, b.y2, dims.height
        )));
    }
    Ok(())
}

/// Split the horizontal interval `[left, right]` into in-frame pieces modulo `W`.
fn wrap_interval(left: f64, right: f64, y1: f64, y2: f64, dims: &FrameDims) -> Vec<BoundingBox> {
    let w = dims.width;
    let eps = 1e-9 * w.max(1.0);
    if right - left >= w - eps {
        return vec![BoundingBox {
            x1: 0.0,
            y1,
            x2: w,
            y2,
        }];
    }
    let k = (left / w).floor();
    let mut l = left - k * w;
    let mut r = right - k * w;
    if l > w - eps {
        l -= w;
        r -= w;
    }
    if l.abs() < eps {
        l = 0.0;
    }
    if (r - w).abs() < eps {
        r = w;
    }
    let l = l.max(0.0);
    if r <= w {
        vec![BoundingBox {
            x1: l,
            y1,
            x2: r,
            y2,
        }]
    } else {
        vec![
            BoundingBox {
                x1: 0.0,
                y1,
                x2: r - w,
                y2,
            },
            BoundingBox {
                x1: l,
                y1,
                x2: w,
                y2,
            },
        ]
    }
}

fn region_of(b: &BoundingBox, dims: &FrameDims) -> Result<WrapRegion> {
    check_vertical(b, dims)?;
    if b.width() > dims.width {
        return Err(Error::InvalidGeometry(format!(
            "box width {} exceeds frame width {}",
            b.width(),
            dims.width
        )));
    }
    let pieces = if b.is_within(dims) {
        vec![*b]
    } else {
        wrap_interval(b.x1, b.x2, b.y1, b.y2, dims)
    };
    Ok(WrapRegion {
        pieces,
        dims: *dims,
        provenance: None,
    })
}

/// Context crop: the box scaled by `alpha` about its center. Width wraps
/// around the seam, height clamps to the frame.
pub fn expand_box(b: &BoundingBox, alpha: f64, dims: &FrameDims) -> Result<WrapRegion> {
    check_alpha(alpha)?;
    if alpha == 1.0 {
        return region_of(b, dims);
    }
    check_vertical(b, dims)?;
    let (cx, cy) = b.center();
    let half_w = (alpha * b.width()).min(dims.width) / 2.0;
    let half_h = (alpha * b.height()).min(dims.height) / 2.0;
    let y1 = (cy - half_h).max(0.0);
    let y2 = (cy + half_h).min(dims.height);
    Ok(WrapRegion {
        pieces: wrap_interval(cx - half_w, cx + half_w, y1, y2, dims),
        dims: *dims,
        provenance: None,
    })
}

/// Target crop: exactly the detected box. In-frame boxes come back as a single
/// identical piece; unwrapped seam-straddling boxes are split.
pub fn local_region(b: &BoundingBox, dims: &FrameDims) -> Result<WrapRegion> {
    region_of(b, dims)
}

pub fn iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let inter = a.intersection_area(b);
    if inter <= 0.0 {
        return 0.0;
    }
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        0.0
    } else {
        (inter / union).min(1.0)
    }
}

/// IoU that treats the horizontal seam as continuous: the max over `a`
/// shifted by `0`, `+W` and `-W`.
pub fn wrap_iou(a: &BoundingBox, b: &BoundingBox, dims: &FrameDims) -> f64 {
    let w = dims.width;
    [0.0, w, -w]
        .iter()
        .map(|&dx| iou(&a.translate_x(dx), b))
        .fold(0.0, f64::max)
}

/// Which overlap measure to use when comparing boxes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IouMode {
    Plain,
    #[default]
    Wrap,
}

impl IouMode {
    pub fn similarity(self, a: &BoundingBox, b: &BoundingBox, dims: &FrameDims) -> f64 {
        match self {
            IouMode::Plain => iou(a, b),
            IouMode::Wrap => wrap_iou(a, b, dims),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bx(x1: f64, y1: f64, x2: f64, y2: f64) -> BoundingBox {
        BoundingBox::new(x1, y1, x2, y2).unwrap()
    }

    #[test]
    fn expand_identity_at_alpha_one() {
        let dims = FrameDims::default();
        let b = bx(12.5, 40.0, 300.25, 470.0);
        let r = expand_box(&b, 1.0, &dims).unwrap();
        assert_eq!(r.pieces(), &[b]);
    }

    #[test]
    fn expand_interior_box() {
        let dims = FrameDims::default();
        let r = expand_box(&bx(100.0, 100.0, 200.0, 200.0), 1.2, &dims).unwrap();
        assert_eq!(r.pieces(), &[bx(90.0, 90.0, 210.0, 210.0)]);
    }

    #[test]
    fn expand_across_right_seam() {
        // center 3730, half-width 36 -> [3694, 3766] -> [0, 6] + [3694, 3760]
        let dims = FrameDims::default();
        let r = expand_box(&bx(3700.0, 100.0, 3760.0, 200.0), 1.2, &dims).unwrap();
        assert_eq!(r.pieces().len(), 2);
        let p = r.pieces();
        assert_eq!(p[0].x1, 0.0);
        assert!((p[0].x2 - 6.0).abs() < 1e-9);
        assert!((p[1].x1 - 3694.0).abs() < 1e-9);
        assert_eq!(p[1].x2, 3760.0);
        for piece in p {
            assert!((piece.y1 - 90.0).abs() < 1e-9 && (piece.y2 - 210.0).abs() < 1e-9);
        }
    }

    #[test]
    fn expand_clamps_vertically() {
        let dims = FrameDims::default();
        let r = expand_box(&bx(100.0, 0.0, 200.0, 480.0), 1.5, &dims).unwrap();
        assert_eq!(r.pieces(), &[bx(75.0, 0.0, 225.0, 480.0)]);
    }

    #[test]
    fn expand_saturates_at_full_width() {
        let dims = FrameDims::new(100.0, 50.0).unwrap();
        let r = expand_box(&bx(10.0, 10.0, 90.0, 20.0), 3.0, &dims).unwrap();
        assert_eq!(r.pieces(), &[bx(0.0, 0.0, 100.0, 30.0)]);
    }

    #[test]
    fn expand_rejects_bad_inputs() {
        let dims = FrameDims::default();
        let b = bx(0.0, 0.0, 10.0, 10.0);
        assert!(matches!(
            expand_box(&b, f64::NAN, &dims),
            Err(Error::InvalidGeometry(_))
        ));
        assert!(matches!(
            expand_box(&b, 0.5, &dims),
            Err(Error::InvalidGeometry(_))
        ));
        assert!(BoundingBox::new(f64::INFINITY, 0.0, 1.0, 1.0).is_err());
        assert!(BoundingBox::new(5.0, 0.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn local_region_is_identity() {
        let dims = FrameDims::default();
        for b in [
            bx(0.0, 0.0, 10.0, 10.0),
            bx(5.0, 5.0, 5.0, 5.0),
            bx(100.0, 100.0, 200.0, 200.0),
        ] {
            let r = local_region(&b, &dims).unwrap();
            assert_eq!(r.pieces(), &[b]);
        }
    }

    #[test]
    fn local_region_splits_unwrapped_box() {
        let dims = FrameDims::default();
        let r = local_region(&bx(-10.0, 0.0, 30.0, 10.0), &dims).unwrap();
        assert_eq!(
            r.pieces(),
            &[bx(0.0, 0.0, 30.0, 10.0), bx(3750.0, 0.0, 3760.0, 10.0)]
        );
        let r = local_region(&bx(3750.0, 0.0, 3790.0, 10.0), &dims).unwrap();
        assert_eq!(
            r.pieces(),
            &[bx(0.0, 0.0, 30.0, 10.0), bx(3750.0, 0.0, 3760.0, 10.0)]
        );
    }

    #[test]
    fn iou_examples() {
        let a = bx(0.0, 0.0, 10.0, 10.0);
        assert_eq!(iou(&a, &a), 1.0);
        assert_eq!(iou(&a, &bx(20.0, 20.0, 30.0, 30.0)), 0.0);
        assert!((iou(&a, &bx(5.0, 0.0, 15.0, 10.0)) - 1.0 / 3.0).abs() < 1e-12);
        let z = bx(5.0, 5.0, 5.0, 5.0);
        assert_eq!(iou(&z, &z), 0.0);
    }

    #[test]
    fn wrap_iou_examples() {
        let dims = FrameDims::default();
        let a = bx(100.0, 0.0, 200.0, 10.0);
        let b = bx(150.0, 0.0, 250.0, 10.0);
        assert_eq!(wrap_iou(&a, &b, &dims), iou(&a, &b));
        // adjacency across the seam is not overlap
        assert_eq!(
            wrap_iou(
                &bx(0.0, 0.0, 20.0, 10.0),
                &bx(3740.0, 0.0, 3760.0, 10.0),
                &dims
            ),
            0.0
        );
        assert_eq!(
            wrap_iou(
                &bx(3755.0, 0.0, 3760.0, 10.0),
                &bx(0.0, 0.0, 5.0, 10.0),
                &dims
            ),
            0.0
        );
        let s = bx(3750.0, 0.0, 3760.0, 10.0);
        assert_eq!(wrap_iou(&s, &s, &dims), 1.0);
        // two representations of the same straddling object
        let right = bx(3750.0, 0.0, 3790.0, 10.0);
        let left = bx(-10.0, 0.0, 30.0, 10.0);
        assert_eq!(iou(&right, &left), 0.0);
        assert_eq!(wrap_iou(&right, &left, &dims), 1.0);
    }

    fn in_frame_box() -> impl Strategy<Value = BoundingBox> {
        (0.0..3760.0f64, 0.0..480.0f64, 0.0..3760.0f64, 0.0..480.0f64).prop_map(|(a, b, c, d)| {
            BoundingBox::new(a.min(c), b.min(d), a.max(c), b.max(d)).unwrap()
        })
    }

    /// Interval coverage of a region, mapped to [0, W) and measured by sampling.
    fn covers(r: &WrapRegion, x: f64) -> bool {
        r.pieces().iter().any(|p| p.x1 <= x && x <= p.x2)
    }

    proptest! {
        #[test]
        fn prop_expand_identity(b in in_frame_box()) {
            let r = expand_box(&b, 1.0, &FrameDims::default()).unwrap();
            prop_assert_eq!(r.pieces(), &[b]);
        }

        #[test]
        fn prop_expand_area_monotone(b in in_frame_box(), a1 in 1.0..4.0f64, a2 in 1.0..4.0f64) {
            let dims = FrameDims::default();
            let (lo, hi) = (a1.min(a2), a1.max(a2));
            let r_lo = expand_box(&b, lo, &dims).unwrap();
            let r_hi = expand_box(&b, hi, &dims).unwrap();
            let tol = 1e-9 * dims.width() * dims.height();
            prop_assert!(r_hi.area() + tol >= r_lo.area());
            prop_assert!(r_lo.area() + tol >= b.area());
        }

        #[test]
        fn prop_expand_pieces_well_formed(b in in_frame_box(), alpha in 1.0..4.0f64) {
            let dims = FrameDims::default();
            let r = expand_box(&b, alpha, &dims).unwrap();
            let p = r.pieces();
            prop_assert!(!p.is_empty() && p.len() <= 2);
            for piece in p {
                prop_assert!(piece.is_within(&dims));
            }
            let expected_w = (alpha * b.width()).min(dims.width());
            prop_assert!((r.width() - expected_w).abs() < 1e-6);
            if p.len() == 2 {
                prop_assert_eq!(p[0].x1, 0.0);
                prop_assert_eq!(p[1].x2, dims.width());
                prop_assert!(p[0].x2 <= p[1].x1);
            }
            // contiguous modulo W: start at the left end of the wrapped interval
            // and walk right without leaving the region
            let start = if p.len() == 2 { p[1].x1 } else { p[0].x1 };
            let steps = 64;
            for i in 0..=steps {
                let x = (start + r.width() * i as f64 / steps as f64) % dims.width();
                prop_assert!(covers(&r, x) || (x == 0.0 && covers(&r, dims.width())));
            }
        }

        #[test]
        fn prop_iou_bounds_and_symmetry(a in in_frame_box(), b in in_frame_box()) {
            let v = iou(&a, &b);
            prop_assert!((0.0..=1.0).contains(&v));
            prop_assert_eq!(v, iou(&b, &a));
            if a.area() > 0.0 {
                prop_assert_eq!(iou(&a, &a), 1.0);
            }
            if v == 1.0 {
                prop_assert_eq!(a, b);
            }
        }

        #[test]
        fn prop_wrap_iou_dominates(a in in_frame_box(), b in in_frame_box()) {
            let dims = FrameDims::default();
            let w = wrap_iou(&a, &b, &dims);
            prop_assert!(w >= iou(&a, &b));
            prop_assert_eq!(w, wrap_iou(&b, &a, &dims));
        }
    }
}
