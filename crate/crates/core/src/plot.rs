//! Minimal PNG line plots for surprise curves: axes, a polyline, and an
//! optional vertical marker. Deliberately dependency-free beyond the image
//! encoder.

use std::path::Path;

use crate::error::{Error, Result};

const WIDTH: u32 = 640;
const HEIGHT: u32 = 360;
const MARGIN: u32 = 40;

const BACKGROUND: [u8; 3] = [255, 255, 255];
const AXIS: [u8; 3] = [60, 60, 60];
const LINE: [u8; 3] = [31, 119, 180];
const MARKER: [u8; 3] = [214, 39, 40];

/// Renders `values` as a line plot, with an optional vertical marker line
/// (a violation frame, say), and writes it as PNG.
pub fn save_line_plot(values: &[f64], marker_frame: Option<usize>, path: &Path) -> Result<()> {
    let mut img = image::RgbImage::from_pixel(WIDTH, HEIGHT, image::Rgb(BACKGROUND));
    let x0 = MARGIN;
    let x1 = WIDTH - MARGIN / 2;
    let y0 = HEIGHT - MARGIN;
    let y1 = MARGIN / 2;

    for x in x0..=x1 {
        img.put_pixel(x, y0, image::Rgb(AXIS));
    }
    for y in y1..=y0 {
        img.put_pixel(x0, y, image::Rgb(AXIS));
    }

    if !values.is_empty() {
        let lo = values
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
            .min(0.0);
        let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let span = (hi - lo).max(1e-9);
        let to_px = |i: usize, v: f64| -> (i64, i64) {
            let fx = if values.len() > 1 {
                i as f64 / (values.len() - 1) as f64
            } else {
                0.0
            };
            let fy = (v - lo) / span;
            (
                (x0 as f64 + fx * (x1 - x0) as f64) as i64,
                (y0 as f64 - fy * (y0 - y1) as f64) as i64,
            )
        };
        if let Some(marker) = marker_frame {
            if marker < values.len() {
                let (mx, _) = to_px(marker, 0.0);
                for y in y1..=y0 {
                    put(&mut img, mx, y as i64, MARKER);
                }
            }
        }
        for i in 1..values.len() {
            let (ax, ay) = to_px(i - 1, values[i - 1]);
            let (bx, by) = to_px(i, values[i]);
            draw_line(&mut img, ax, ay, bx, by, LINE);
        }
    }
    img.save(path)
        .map_err(|e| Error::format(path, e.to_string()))
}

fn put(img: &mut image::RgbImage, x: i64, y: i64, color: [u8; 3]) {
    if x >= 0 && y >= 0 && (x as u32) < img.width() && (y as u32) < img.height() {
        img.put_pixel(x as u32, y as u32, image::Rgb(color));
    }
}

/// Bresenham.
fn draw_line(img: &mut image::RgbImage, x0: i64, y0: i64, x1: i64, y1: i64, color: [u8; 3]) {
    let dx = (x1 - x0).abs();
    let dy = -(y1 - y0).abs();
    let sx = if x0 < x1 { 1 } else { -1 };
    let sy = if y0 < y1 { 1 } else { -1 };
    let mut err = dx + dy;
    let (mut x, mut y) = (x0, y0);
    loop {
        put(img, x, y, color);
        if x == x1 && y == y1 {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x += sx;
        }
        if e2 <= dx {
            err += dx;
            y += sy;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn writes_a_png() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("curve.png");
        let values: Vec<f64> = (0..50).map(|i| (i as f64 / 5.0).sin() + 2.0).collect();
        save_line_plot(&values, Some(25), &path).unwrap();
        let img = image::open(&path).unwrap().to_rgb8();
        assert_eq!(img.width(), WIDTH);
        // The marker column should contain red pixels.
        let has_marker = img.pixels().any(|p| p.0 == MARKER);
        assert!(has_marker);
    }

    #[test]
    fn empty_curve_still_plots_axes() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.png");
        save_line_plot(&[], None, &path).unwrap();
        assert!(path.exists());
    }
}
