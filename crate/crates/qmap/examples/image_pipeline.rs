//! The learned image denoiser end to end: synthesize a corpus, train the
//! 28-bit patch prior, and denoise a held-out scene against the
//! hard-thresholding baseline.
//!
//! Run with: `cargo run --release --example image_pipeline`

use qmap::image::synth::{synth_corpus, synth_scene};
use qmap::image::{denoise_image, hard_threshold_image, noisy_copy, train_prior};
use qmap::metrics::psnr;

fn main() -> qmap::Result<()> {
    let corpus = synth_corpus(120, 96, 96, 7);
    let trained = train_prior(&corpus, 128, 29)?;
    println!("trained on {} patches from {} scenes", trained.prior.total(), corpus.len());
    println!("{}\n", trained.prior.rank_summary());

    let sigma = 25.0 / 255.0;
    let clean = synth_scene(96, 96, 7007);
    let noisy = noisy_copy(&clean, sigma, 77)?;

    // pick lambda on a separate validation scene
    let validation = synth_scene(96, 96, 555_000);
    let val_noisy = noisy_copy(&validation, sigma, 78)?;
    let mut best = (f64::NEG_INFINITY, 0.0);
    for lambda in [0.008, 0.016, 0.024, 0.032, 0.048] {
        let out = denoise_image(&val_noisy, &trained, lambda, 1)?;
        let p = psnr(&validation, &out, 1.0)?;
        if p > best.0 {
            best = (p, lambda);
        }
    }
    let lambda = best.1;

    let denoised = denoise_image(&noisy, &trained, lambda, 1)?;
    let universal = sigma * (2.0 * (96.0f64 * 96.0).ln()).sqrt();
    let thresh = hard_threshold_image(&noisy, universal, 1)?;

    println!("held-out scene at sigma = 25/255, lambda = {lambda} (validation grid):");
    println!("  noisy           {:6.2} dB", psnr(&clean, &noisy, 1.0)?);
    println!("  hard threshold  {:6.2} dB (universal threshold {:.3})", psnr(&clean, &thresh, 1.0)?, universal);
    println!("  learned q-map   {:6.2} dB", psnr(&clean, &denoised, 1.0)?);
    Ok(())
}
