//! Scalar denoising of a spike-slab source, against the conditional-mean
//! oracle and hard thresholding.
//!
//! Run with: `cargo run --release --example scalar_denoise`

use qmap::denoise::{mmse_scalar, qmap_scalar, DenoiseConfig};
use qmap::source::{corrupt, SpikeSlabModel};
use qmap::QuantSpec;

fn main() -> qmap::Result<()> {
    // atom at 0.5 with mass 0.7, uniform slab with mass 0.3
    let model = SpikeSlabModel::single_atom(0.3, 0.5)?;
    let spec = QuantSpec::new(12)?;
    let table = model.weights(spec)?;

    let sigma: f64 = 0.02;
    let lambda = sigma.powf(1.5);
    let cfg = DenoiseConfig::new(lambda, &table)?;

    let n = 20_000;
    let (clean, labels) = model.sample(n, 1);
    let obs = corrupt(&clean, sigma, 2)?;

    let mut sq = [0.0f64; 3]; // q-map, mmse, hard threshold
    for i in 0..n {
        let y = obs.noisy[i];
        let x = clean[i];
        let q = qmap_scalar(y, &cfg)?.estimate[0];
        let m = mmse_scalar(y, &model, sigma)?;
        // thresholding toward the atom instead of toward zero
        let h = if (y - 0.5).abs() <= lambda.sqrt() { 0.5 } else { y.clamp(0.0, 1.0) };
        sq[0] += (x - q) * (x - q);
        sq[1] += (x - m) * (x - m);
        sq[2] += (x - h) * (x - h);
    }
    let s2 = sigma * sigma;
    println!("spike-slab q0 = {}, sigma = {sigma}, lambda = sigma^1.5 = {lambda:.5}", model.q0());
    println!("{n} symbols; mean squared error / sigma^2:");
    println!("  q-map scalar     {:.4}", sq[0] / n as f64 / s2);
    println!("  conditional mean {:.4}", sq[1] / n as f64 / s2);
    println!("  hard threshold   {:.4}", sq[2] / n as f64 / s2);
    println!("(the small-sigma limit of the first two is q0 = {})", model.q0());

    // a few individual denoisings around the atom
    println!("\n y        q-map    estimate lands");
    for y in [0.47, 0.492, 0.499, 0.508, 0.53] {
        let r = qmap_scalar(y, &cfg)?;
        let est = r.estimate[0];
        let tag = if (est - 0.5).abs() <= spec.bin_width() { "atom bin" } else { "tracks y" };
        println!(" {y:<8} {est:<8.5} {tag}");
    }
    let _ = labels;
    Ok(())
}
