//! Video frames: dense RGB grids with channels in `[0, 1]`.

use std::path::Path;

use crate::error::{Error, Result};

/// One video frame. Pixels are row-major `[r, g, b]` triples in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub index: usize,
    width: usize,
    height: usize,
    pixels: Vec<[f64; 3]>,
}

impl Frame {
    pub fn new(index: usize, width: usize, height: usize, pixels: Vec<[f64; 3]>) -> Result<Self> {
        if width * height == 0 || pixels.len() != width * height {
            return Err(Error::DimensionMismatch(width, height, pixels.len(), 1));
        }
        for (i, p) in pixels.iter().enumerate() {
            if p.iter().any(|c| !(0.0..=1.0).contains(c)) {
                return Err(Error::InvalidWeight {
                    index: i,
                    value: p[0],
                });
            }
        }
        Ok(Frame {
            index,
            width,
            height,
            pixels,
        })
    }

    pub fn filled(index: usize, width: usize, height: usize, color: [f64; 3]) -> Self {
        Frame {
            index,
            width,
            height,
            pixels: vec![color; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> [f64; 3] {
        self.pixels[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, color: [f64; 3]) {
        debug_assert!(color.iter().all(|c| (0.0..=1.0).contains(c)));
        self.pixels[y * self.width + x] = color;
    }

    pub fn pixels(&self) -> &[[f64; 3]] {
        &self.pixels
    }

    /// Extracts the `w x h` window anchored at `(x0, y0)`.
    pub fn crop(&self, x0: usize, y0: usize, w: usize, h: usize) -> Frame {
        let mut pixels = Vec::with_capacity(w * h);
        for y in 0..h {
            for x in 0..w {
                pixels.push(self.get(x0 + x, y0 + y));
            }
        }
        Frame {
            index: self.index,
            width: w,
            height: h,
            pixels,
        }
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        let mut img = image::RgbImage::new(self.width as u32, self.height as u32);
        for y in 0..self.height {
            for x in 0..self.width {
                let p = self.get(x, y);
                img.put_pixel(
                    x as u32,
                    y as u32,
                    image::Rgb([
                        (p[0] * 255.0).round() as u8,
                        (p[1] * 255.0).round() as u8,
                        (p[2] * 255.0).round() as u8,
                    ]),
                );
            }
        }
        img.save(path)
            .map_err(|e| Error::format(path, e.to_string()))
    }

    pub fn load_png(index: usize, path: &Path) -> Result<Frame> {
        let img = image::open(path)
            .map_err(|e| Error::format(path, e.to_string()))?
            .to_rgb8();
        let (w, h) = (img.width() as usize, img.height() as usize);
        let pixels = img
            .pixels()
            .map(|p| {
                [
                    p.0[0] as f64 / 255.0,
                    p.0[1] as f64 / 255.0,
                    p.0[2] as f64 / 255.0,
                ]
            })
            .collect();
        Frame::new(index, w, h, pixels)
    }
}
