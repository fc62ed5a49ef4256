//! Quantized-MAP denoising of analog sources in additive Gaussian noise.
//!
//! The estimators here score a candidate reconstruction by its squared
//! distance to the observation plus `lambda` times the summed negative log
//! probabilities of its quantized sliding blocks. At fine quantization that
//! regularizer behaves like a structure indicator, so the minimizer snaps to
//! the source's atoms, branch maps, or learned patch patterns while tracking
//! the observation elsewhere.
//!
//! What's in the box:
//!
//! - [`quant`] / [`weights`]: the `[0, 1)` bin quantizer, empirical block
//!   distributions, and sparse weight tables with a default weight.
//! - [`source`]: spike-slab i.i.d. and first-order Markov generators with
//!   exact bin/pair probabilities and ideal weight tables.
//! - [`denoise`]: exact scalar and pairwise solvers, an exhaustive oracle,
//!   hard-thresholding and conditional-mean baselines.
//! - [`metrics`]: MSE, quantized entropy, information-dimension slopes,
//!   sweep records, PSNR.
//! - [`image`]: the learned 4x4-patch image denoiser (Haar transform, 28-bit
//!   quantizer, smoothed codeword prior, overlap averaging) plus PGM I/O and
//!   a synthetic-scene generator.
//! - [`harness`]: reproducible experiment drivers behind the `qmap` binary.
//!
//! Start with the runnable examples (`cargo run --release --example ...`):
//! each one demonstrates a major capability end to end.

pub mod config;
pub mod denoise;
pub mod error;
mod gauss;
pub mod harness;
pub mod image;
pub mod metrics;
pub mod quant;
pub mod rng;
pub mod source;
pub mod weights;

pub use error::{QmapError, Result};
pub use quant::QuantSpec;
pub use weights::{BlockKey, WeightTable};
