//! Patch search and overlap-averaged image reconstruction.

use rayon::prelude::*;

use super::prior::TrainedPrior;
use super::{haar, GrayImage};
use crate::error::{QmapError, Result};

/// Denoise one 4x4 patch: minimize `dist(patch, cell k) + lambda * (-log2 pi(k))`.
pub fn denoise_patch(noisy: &[f64; 16], trained: &TrainedPrior, lambda: f64) -> [f64; 16] {
    denoise_patch_detail(noisy, trained, lambda).0
}

/// Like [`denoise_patch`] but also reports the winning codeword and cost.
///
/// Stored codewords are scanned in decreasing probability; since the penalty
/// term is nondecreasing along that order and distances are nonnegative, the
/// scan stops once the penalty alone reaches the best cost, which makes the
/// pruned search exact over the stored set. The noisy patch's own cell, when
/// unstored, stands in for the unseen remainder at the smoothed floor
/// probability (distance 0 is the best any unseen cell could do).
pub fn denoise_patch_detail(
    noisy: &[f64; 16],
    trained: &TrainedPrior,
    lambda: f64,
) -> ([f64; 16], u32, f64) {
    let codec = &trained.codec;
    let prior = &trained.prior;
    let coeffs = haar::forward(noisy);
    let own = codec.encode_coeffs(&coeffs);

    let mut best: Option<(f64, u32)> = None;
    for &(code, _) in prior.ranked() {
        let penalty = lambda * prior.weight_bits(code);
        if let Some((bc, _)) = best {
            if penalty >= bc {
                break;
            }
        }
        let (_, dist) = codec.project_coeffs(&coeffs, code);
        let cost = dist + penalty;
        if best.map_or(true, |(bc, _)| cost < bc) {
            best = Some((cost, code));
        }
    }
    if !prior.is_stored(own) {
        let cost = lambda * prior.floor_weight_bits();
        if best.map_or(true, |(bc, _)| cost < bc) {
            best = Some((cost, own));
        }
    }
    let (cost, code) = best.expect("priors always store at least one codeword");
    if code == own {
        // own cell: the projection is the identity, keep the patch bit-exact
        return (*noisy, code, cost);
    }
    let (proj, _) = codec.project_coeffs(&coeffs, code);
    (haar::inverse(&proj), code, cost)
}

/// Exhaustive reference search over the stored codewords plus the noisy
/// patch's own cell (testing oracle for the pruned search).
pub fn denoise_patch_exhaustive(
    noisy: &[f64; 16],
    trained: &TrainedPrior,
    lambda: f64,
) -> ([f64; 16], u32, f64) {
    let codec = &trained.codec;
    let prior = &trained.prior;
    let coeffs = haar::forward(noisy);
    let own = codec.encode_coeffs(&coeffs);
    let mut best: Option<(f64, u32)> = None;
    for &(code, _) in prior.ranked() {
        let (_, dist) = codec.project_coeffs(&coeffs, code);
        let cost = dist + lambda * prior.weight_bits(code);
        if best.map_or(true, |(bc, _)| cost < bc) {
            best = Some((cost, code));
        }
    }
    if !prior.is_stored(own) {
        let cost = lambda * prior.floor_weight_bits();
        if best.map_or(true, |(bc, _)| cost < bc) {
            best = Some((cost, own));
        }
    }
    let (cost, code) = best.unwrap();
    if code == own {
        return (*noisy, code, cost);
    }
    let (proj, _) = codec.project_coeffs(&coeffs, code);
    (haar::inverse(&proj), code, cost)
}

/// Slide a 4x4 window at `stride`, process each patch, and average the
/// overlapping results per pixel. The final row/column of origins is always
/// included so every pixel is covered.
fn overlap_process(
    noisy: &GrayImage,
    stride: usize,
    process: impl Fn(&[f64; 16]) -> [f64; 16] + Sync,
) -> Result<GrayImage> {
    if stride == 0 {
        return Err(QmapError::BadModel("stride must be >= 1".into()));
    }
    let (w, h) = (noisy.width(), noisy.height());
    let xs = origins(w, stride);
    let ys = origins(h, stride);

    // parallel over patch rows; each worker owns disjoint accumulators
    let (sums, counts) = ys
        .par_iter()
        .map(|&y| {
            let mut sums = vec![0.0f64; w * h];
            let mut counts = vec![0u32; w * h];
            for &x in &xs {
                let out = process(&noisy.patch_at(x, y));
                for dy in 0..4 {
                    for dx in 0..4 {
                        let idx = (y + dy) * w + x + dx;
                        sums[idx] += out[dy * 4 + dx];
                        counts[idx] += 1;
                    }
                }
            }
            (sums, counts)
        })
        .reduce(
            || (vec![0.0f64; w * h], vec![0u32; w * h]),
            |(mut sa, mut ca), (sb, cb)| {
                for i in 0..sa.len() {
                    sa[i] += sb[i];
                    ca[i] += cb[i];
                }
                (sa, ca)
            },
        );

    let samples: Vec<f64> = sums
        .iter()
        .zip(&counts)
        .map(|(&s, &c)| {
            debug_assert!(c > 0, "every pixel must be covered");
            (s / c as f64).clamp(0.0, 1.0)
        })
        .collect();
    GrayImage::new(w, h, samples)
}

fn origins(len: usize, stride: usize) -> Vec<usize> {
    let last = len - 4;
    let mut xs: Vec<usize> = (0..=last).step_by(stride).collect();
    if *xs.last().unwrap() != last {
        xs.push(last);
    }
    xs
}

/// Denoise a full image with the learned prior.
pub fn denoise_image(
    noisy: &GrayImage,
    trained: &TrainedPrior,
    lambda: f64,
    stride: usize,
) -> Result<GrayImage> {
    overlap_process(noisy, stride, |patch| denoise_patch(patch, trained, lambda))
}

/// Hard-thresholding baseline: zero every AC coefficient with magnitude at
/// most `threshold`, keep the DC, overlap-average like the learned denoiser.
pub fn hard_threshold_image(noisy: &GrayImage, threshold: f64, stride: usize) -> Result<GrayImage> {
    if !(threshold >= 0.0) {
        return Err(QmapError::BadModel(format!("threshold {threshold} must be >= 0")));
    }
    overlap_process(noisy, stride, |patch| {
        let mut coeffs = haar::forward(patch);
        for (idx, c) in coeffs.iter_mut().enumerate() {
            if idx != 0 && c.abs() <= threshold {
                *c = 0.0;
            }
        }
        haar::inverse(&coeffs)
    })
}
