//! Soft segmentation masks and the handful of pixel operations every other
//! module builds on.
//!
//! A [`Mask`] is a dense row-major grid of weights in `[0, 1]`. Masks stay
//! soft everywhere except where an indicator is explicitly required
//! (likelihood terms, merge overlap counting), which is what [`Mask::binarize`]
//! and [`mask_overlap_pixels`] are for.

use std::path::Path;

use crate::error::{Error, Result};

/// Dense per-pixel weight map, row-major, weights in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mask {
    width: usize,
    height: usize,
    weights: Vec<f64>,
}

impl Mask {
    /// Validating constructor. Rejects empty grids and out-of-range weights.
    pub fn from_weights(width: usize, height: usize, weights: Vec<f64>) -> Result<Self> {
        if width * height == 0 {
            return Err(Error::EmptyMask("mask must have positive area"));
        }
        if weights.len() != width * height {
            return Err(Error::DimensionMismatch(width, height, weights.len(), 1));
        }
        for (index, &value) in weights.iter().enumerate() {
            if !(0.0..=1.0).contains(&value) {
                return Err(Error::InvalidWeight { index, value });
            }
        }
        Ok(Mask {
            width,
            height,
            weights,
        })
    }

    /// Constant-valued mask. `value` must already be in `[0, 1]`.
    pub fn constant(width: usize, height: usize, value: f64) -> Self {
        debug_assert!((0.0..=1.0).contains(&value));
        Mask {
            width,
            height,
            weights: vec![value; width * height],
        }
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self::constant(width, height, 0.0)
    }

    pub fn ones(width: usize, height: usize) -> Self {
        Self::constant(width, height, 1.0)
    }

    /// Builds a mask by evaluating `f(x, y)`; the result is clamped to `[0, 1]`.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut weights = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                weights.push(f(x, y).clamp(0.0, 1.0));
            }
        }
        Mask {
            width,
            height,
            weights,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn same_size(&self, other: &Mask) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub(crate) fn check_same_size(&self, other: &Mask) -> Result<()> {
        if !self.same_size(other) {
            return Err(Error::DimensionMismatch(
                self.width,
                self.height,
                other.width,
                other.height,
            ));
        }
        Ok(())
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.weights[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: f64) {
        debug_assert!((0.0..=1.0).contains(&value));
        self.weights[y * self.width + x] = value;
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Sum of all weights.
    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Number of pixels strictly above `threshold`.
    pub fn count_above(&self, threshold: f64) -> usize {
        self.weights.iter().filter(|&&w| w > threshold).count()
    }

    /// Hard indicator mask: weight 1 iff the input weight is strictly above
    /// `threshold`.
    pub fn binarize(&self, threshold: f64) -> Mask {
        debug_assert!(threshold > 0.0 && threshold < 1.0);
        Mask {
            width: self.width,
            height: self.height,
            weights: self
                .weights
                .iter()
                .map(|&w| if w > threshold { 1.0 } else { 0.0 })
                .collect(),
        }
    }

    /// Elementwise product; both operands are in `[0, 1]` so the result is too.
    pub fn mul(&self, other: &Mask) -> Result<Mask> {
        self.check_same_size(other)?;
        Ok(Mask {
            width: self.width,
            height: self.height,
            weights: self
                .weights
                .iter()
                .zip(&other.weights)
                .map(|(a, b)| a * b)
                .collect(),
        })
    }

    /// Elementwise `1 - w`.
    pub fn complement(&self) -> Mask {
        Mask {
            width: self.width,
            height: self.height,
            weights: self.weights.iter().map(|w| 1.0 - w).collect(),
        }
    }

    /// Elementwise maximum.
    pub fn union(&self, other: &Mask) -> Result<Mask> {
        self.check_same_size(other)?;
        Ok(Mask {
            width: self.width,
            height: self.height,
            weights: self
                .weights
                .iter()
                .zip(&other.weights)
                .map(|(a, b)| a.max(*b))
                .collect(),
        })
    }

    /// Number of pixels where both binarized masks agree on 1.
    pub fn intersection_count(&self, other: &Mask, threshold: f64) -> Result<usize> {
        mask_overlap_pixels(self, other, threshold)
    }

    /// Copies this mask into a `width x height` canvas with its top-left
    /// corner at `(x0, y0)`; everything outside the source stays zero.
    pub fn lift(&self, width: usize, height: usize, x0: usize, y0: usize) -> Mask {
        let mut out = Mask::zeros(width, height);
        for y in 0..self.height {
            let ty = y + y0;
            if ty >= height {
                break;
            }
            for x in 0..self.width {
                let tx = x + x0;
                if tx >= width {
                    break;
                }
                out.weights[ty * width + tx] = self.weights[y * self.width + x];
            }
        }
        out
    }

    /// Extracts the `w x h` window anchored at `(x0, y0)`.
    pub fn crop(&self, x0: usize, y0: usize, w: usize, h: usize) -> Mask {
        Mask::from_fn(w, h, |x, y| self.get(x0 + x, y0 + y))
    }

    /// Writes the mask as an 8-bit grayscale PNG (`weight * 255`, rounded).
    pub fn save_png(&self, path: &Path) -> Result<()> {
        let mut img = image::GrayImage::new(self.width as u32, self.height as u32);
        for y in 0..self.height {
            for x in 0..self.width {
                let v = (self.get(x, y) * 255.0).round() as u8;
                img.put_pixel(x as u32, y as u32, image::Luma([v]));
            }
        }
        img.save(path)
            .map_err(|e| Error::format(path, e.to_string()))
    }

    /// Reads an 8-bit grayscale PNG written by [`Mask::save_png`].
    pub fn load_png(path: &Path) -> Result<Mask> {
        let img = image::open(path)
            .map_err(|e| Error::format(path, e.to_string()))?
            .to_luma8();
        let (w, h) = (img.width() as usize, img.height() as usize);
        let weights = img.pixels().map(|p| p.0[0] as f64 / 255.0).collect();
        Mask::from_weights(w, h, weights)
    }
}

/// Number of pixels where both masks exceed `bin_threshold`.
pub fn mask_overlap_pixels(a: &Mask, b: &Mask, bin_threshold: f64) -> Result<usize> {
    debug_assert!(bin_threshold > 0.0 && bin_threshold < 1.0);
    a.check_same_size(b)?;
    Ok(a.weights
        .iter()
        .zip(&b.weights)
        .filter(|(&x, &y)| x > bin_threshold && y > bin_threshold)
        .count())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn overlap_identical_ones() {
        let a = Mask::ones(10, 10);
        assert_eq!(mask_overlap_pixels(&a, &a, 0.5).unwrap(), 100);
    }

    #[test]
    fn overlap_disjoint() {
        let a = Mask::from_fn(10, 10, |x, _| if x < 5 { 1.0 } else { 0.0 });
        let b = Mask::from_fn(10, 10, |x, _| if x >= 5 { 1.0 } else { 0.0 });
        assert_eq!(mask_overlap_pixels(&a, &b, 0.5).unwrap(), 0);
    }

    #[test]
    fn overlap_columns_brute_force() {
        // a covers columns 0-4, b covers columns 3-7; shared columns 3-4
        // over 10 rows give 20 pixels, confirmed by explicit counting.
        let a = Mask::from_fn(10, 10, |x, _| if x <= 4 { 1.0 } else { 0.0 });
        let b = Mask::from_fn(10, 10, |x, _| if (3..=7).contains(&x) { 1.0 } else { 0.0 });
        let mut brute = 0;
        for y in 0..10 {
            for x in 0..10 {
                if a.get(x, y) > 0.5 && b.get(x, y) > 0.5 {
                    brute += 1;
                }
            }
        }
        assert_eq!(brute, 20);
        assert_eq!(mask_overlap_pixels(&a, &b, 0.5).unwrap(), brute);
    }

    #[test]
    fn overlap_size_mismatch_errors() {
        let a = Mask::ones(4, 4);
        let b = Mask::ones(5, 4);
        assert!(matches!(
            mask_overlap_pixels(&a, &b, 0.5),
            Err(Error::DimensionMismatch(..))
        ));
    }

    #[test]
    fn binarize_above() {
        let m = Mask::constant(3, 3, 0.6).binarize(0.5);
        assert!(m.weights().iter().all(|&w| w == 1.0));
    }

    #[test]
    fn binarize_boundary_is_strict() {
        let m = Mask::constant(3, 3, 0.5).binarize(0.5);
        assert!(m.weights().iter().all(|&w| w == 0.0));
    }

    #[test]
    fn binarize_checkerboard() {
        let m = Mask::from_fn(4, 4, |x, y| if (x + y) % 2 == 0 { 0.2 } else { 0.8 });
        let b = m.binarize(0.5);
        for y in 0..4 {
            for x in 0..4 {
                let expect = if (x + y) % 2 == 0 { 0.0 } else { 1.0 };
                assert_eq!(b.get(x, y), expect);
            }
        }
    }

    #[test]
    fn rejects_out_of_range_weight() {
        let err = Mask::from_weights(2, 1, vec![0.5, 1.5]);
        assert!(matches!(err, Err(Error::InvalidWeight { index: 1, .. })));
    }

    #[test]
    fn rejects_empty() {
        assert!(Mask::from_weights(0, 3, vec![]).is_err());
    }

    #[test]
    fn png_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.png");
        let m = Mask::from_fn(7, 5, |x, y| (x + y) as f64 / 12.0);
        m.save_png(&path).unwrap();
        let back = Mask::load_png(&path).unwrap();
        assert_eq!(back.width(), 7);
        assert_eq!(back.height(), 5);
        for (a, b) in m.weights().iter().zip(back.weights()) {
            assert!((a - b).abs() <= 0.5 / 255.0 + 1e-12);
        }
    }

    proptest! {
        #[test]
        fn binarize_idempotent(values in proptest::collection::vec(0.0f64..=1.0, 16)) {
            let m = Mask::from_weights(4, 4, values).unwrap();
            let once = m.binarize(0.5);
            let twice = once.binarize(0.5);
            prop_assert_eq!(once, twice);
        }

        #[test]
        fn overlap_symmetric(
            a in proptest::collection::vec(0.0f64..=1.0, 16),
            b in proptest::collection::vec(0.0f64..=1.0, 16),
        ) {
            let ma = Mask::from_weights(4, 4, a).unwrap();
            let mb = Mask::from_weights(4, 4, b).unwrap();
            prop_assert_eq!(
                mask_overlap_pixels(&ma, &mb, 0.5).unwrap(),
                mask_overlap_pixels(&mb, &ma, 0.5).unwrap()
            );
        }

        #[test]
        fn self_overlap_counts_threshold(values in proptest::collection::vec(0.0f64..=1.0, 16)) {
            let m = Mask::from_weights(4, 4, values).unwrap();
            prop_assert_eq!(
                mask_overlap_pixels(&m, &m, 0.5).unwrap(),
                m.count_above(0.5)
            );
        }
    }
}
