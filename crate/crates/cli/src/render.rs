use std::collections::BTreeMap;

use image::{Rgb, RgbImage};
use ortrack::geometry::{local_region, BoundingBox, FrameDims};
use ortrack::tracker::read_results_file;

use crate::config::format_frame_pattern;
use crate::{CliError, RenderArgs};

const THICKNESS: u32 = 2;

/// Stable, well-spread color per track id.
pub fn color_for_id(id: u64) -> Rgb<u8> {
    // golden-ratio hue stepping
    let hue = (id as f64 * 0.618_033_988_749_895).fract();
    let h = hue * 6.0;
    let x = 1.0 - (h % 2.0 - 1.0).abs();
    let (r, g, b) = match h as u32 {
        0 => (1.0, x, 0.0),
        1 => (x, 1.0, 0.0),
        2 => (0.0, 1.0, x),
        3 => (0.0, x, 1.0),
        4 => (x, 0.0, 1.0),
        _ => (1.0, 0.0, x),
    };
    let c = |v: f64| (55.0 + 200.0 * v).round() as u8;
    Rgb([c(r), c(g), c(b)])
}

fn draw_rect(img: &mut RgbImage, b: &BoundingBox, color: Rgb<u8>) {
    let (w, h) = img.dimensions();
    if w == 0 || h == 0 {
        return;
    }
    let clampx = |v: f64| (v.max(0.0) as u32).min(w - 1);
    let clampy = |v: f64| (v.max(0.0) as u32).min(h - 1);
    let (x1, x2) = (clampx(b.x1), clampx(b.x2 - 1.0));
    let (y1, y2) = (clampy(b.y1), clampy(b.y2 - 1.0));
    for t in 0..THICKNESS {
        for x in x1..=x2 {
            img.put_pixel(x, (y1 + t).min(y2), color);
            img.put_pixel(x, y2.saturating_sub(t).max(y1), color);
        }
        for y in y1..=y2 {
            img.put_pixel((x1 + t).min(x2), y, color);
            img.put_pixel(x2.saturating_sub(t).max(x1), y, color);
        }
    }
}

pub fn run(args: RenderArgs) -> Result<(), CliError> {
    let trajectories = read_results_file(&args.results)?;
    let mut by_frame: BTreeMap<u64, Vec<(u64, BoundingBox)>> = BTreeMap::new();
    for t in &trajectories {
        for (&f, &b) in &t.boxes {
            by_frame.entry(f).or_default().push((t.id, b));
        }
    }
    if by_frame.is_empty() {
        log::info!("no boxes to render");
        return Ok(());
    }
    std::fs::create_dir_all(&args.out).map_err(|e| CliError::io(&args.out, e))?;
    for (frame, boxes) in by_frame {
        let src = format_frame_pattern(&args.frames_pattern, frame);
        let mut img = image::open(&src)
            .map_err(|e| CliError::Input(format!("{src}: {e}")))?
            .to_rgb8();
        let dims = FrameDims::new(img.width() as f64, img.height() as f64)?;
        for (id, b) in boxes {
            // seam-straddling boxes are drawn as two pieces
            for piece in local_region(&b, &dims)?.pieces() {
                draw_rect(&mut img, piece, color_for_id(id));
            }
        }
        let dst = args.out.join(format!("{frame:06}.png"));
        img.save(&dst)
            .map_err(|e| CliError::Input(format!("{}: {e}", dst.display())))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn colors_are_stable_and_distinct() {
        assert_eq!(color_for_id(4), color_for_id(4));
        let colors: Vec<_> = (1..=8).map(color_for_id).collect();
        for i in 0..colors.len() {
            for j in i + 1..colors.len() {
                assert_ne!(colors[i], colors[j]);
            }
        }
    }

    #[test]
    fn rect_outline_only() {
        let mut img = RgbImage::new(20, 20);
        let red = Rgb([255, 0, 0]);
        draw_rect(
            &mut img,
            &BoundingBox::new(5.0, 5.0, 15.0, 15.0).unwrap(),
            red,
        );
        assert_eq!(*img.get_pixel(5, 10), red);
        assert_eq!(*img.get_pixel(14, 14), red);
        assert_eq!(*img.get_pixel(10, 10), Rgb([0, 0, 0]));
        assert_eq!(*img.get_pixel(16, 10), Rgb([0, 0, 0]));
    }
}
