//! Learning-based patch denoiser for grayscale images.
//!
//! Pipeline: a 4x4 orthonormal Haar transform, a 28-bit variable-rate
//! quantizer with empirical-quantile breakpoints, an add-one-smoothed
//! codeword prior learned from sampled patches, closed-form per-codeword
//! projection, and overlap-averaged reconstruction.

mod codec;
mod denoise;
pub mod haar;
mod pgm;
mod prior;
pub mod synth;

pub use codec::{
    bits_for_frequency, build_breakpoints, Breakpoints, CodewordLayout, CoeffSlot, PatchCodec,
    CODEWORD_BITS, CODEWORD_SPACE,
};
pub use denoise::{
    denoise_image, denoise_patch, denoise_patch_detail, denoise_patch_exhaustive,
    hard_threshold_image,
};
pub use pgm::{load_corpus, read_pgm, read_pgm_bytes, write_pgm, to_pgm_bytes};
pub use prior::{train_prior, PatchPrior, RankSummary, TrainedPrior};

use crate::error::{QmapError, Result};
use crate::source::corrupt;

/// Grayscale image with intensities in `[0, 1]`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    samples: Vec<f64>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, samples: Vec<f64>) -> Result<Self> {
        if width < 4 || height < 4 {
            return Err(QmapError::ImageTooSmall { width, height });
        }
        if samples.len() != width * height {
            return Err(QmapError::DimensionMismatch(format!(
                "{} samples for {}x{}",
                samples.len(),
                width,
                height
            )));
        }
        if samples.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(QmapError::BadModel("image samples must lie in [0, 1]".into()));
        }
        Ok(Self { width, height, samples })
    }

    /// Build from a function of `(x, y)`; values are clamped into `[0, 1]`.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let samples = (0..height)
            .flat_map(|y| (0..width).map(move |x| (x, y)))
            .map(|(x, y)| f(x, y).clamp(0.0, 1.0))
            .collect();
        Self { width, height, samples }
    }

    /// Build from raw samples, clamping each into `[0, 1]` (noisy data).
    pub fn from_samples_clamped(width: usize, height: usize, samples: Vec<f64>) -> Result<Self> {
        let clamped = samples.into_iter().map(|v| v.clamp(0.0, 1.0)).collect();
        Self::new(width, height, clamped)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.samples[y * self.width + x]
    }

    /// The 4x4 patch whose top-left corner is `(x, y)`, row-major.
    pub fn patch_at(&self, x: usize, y: usize) -> [f64; 16] {
        let mut p = [0.0f64; 16];
        for dy in 0..4 {
            let row = (y + dy) * self.width + x;
            p[dy * 4..dy * 4 + 4].copy_from_slice(&self.samples[row + 0..row + 4]);
        }
        p
    }
}

/// Corrupt an image with Gaussian noise and clamp back into `[0, 1]`.
pub fn noisy_copy(image: &GrayImage, sigma: f64, seed: u64) -> Result<GrayImage> {
    let obs = corrupt(image.samples(), sigma, seed)?;
    GrayImage::from_samples_clamped(image.width, image.height, obs.noisy)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn image_validation() {
        assert!(GrayImage::new(3, 8, vec![0.0; 24]).is_err());
        assert!(GrayImage::new(8, 8, vec![0.0; 63]).is_err());
        assert!(GrayImage::new(8, 8, vec![1.5; 64]).is_err());
        assert!(GrayImage::new(8, 8, vec![0.5; 64]).is_ok());
    }

    #[test]
    fn patch_extraction() {
        let img = GrayImage::from_fn(8, 8, |x, y| (x + 8 * y) as f64 / 64.0);
        let p = img.patch_at(2, 3);
        assert_eq!(p[0], img.get(2, 3));
        assert_eq!(p[5], img.get(3, 4));
        assert_eq!(p[15], img.get(5, 6));
    }

    #[test]
    fn noisy_copy_clamps_and_replays() {
        let img = GrayImage::from_fn(8, 8, |_, _| 0.02);
        let a = noisy_copy(&img, 0.2, 5).unwrap();
        let b = noisy_copy(&img, 0.2, 5).unwrap();
        assert_eq!(a, b);
        assert!(a.samples().iter().all(|v| (0.0..=1.0).contains(v)));
        assert!(a.samples().iter().any(|v| *v == 0.0), "clamping engaged");
    }
}
