//! Denoising a piecewise-constant path with the exact pairwise dynamic
//! program, and recovering its jump structure.
//!
//! Run with: `cargo run --release --example markov_denoise`

use qmap::denoise::{qmap_markov_dp, recover_structure_markov, DenoiseConfig};
use qmap::metrics::{mse, MseSelection};
use qmap::source::{corrupt, MarkovModel};
use qmap::QuantSpec;

fn main() -> qmap::Result<()> {
    // stay with probability 0.9, redraw uniformly with probability 0.1
    let model = MarkovModel::piecewise_constant(0.1)?;
    let spec = QuantSpec::new(8)?;
    let table = model.weights(spec)?;

    let sigma: f64 = 0.02;
    let cfg = DenoiseConfig::new(sigma.powf(1.5), &table)?;

    let n = 256;
    let (clean, _) = model.sample(n, 11);
    let obs = corrupt(&clean, sigma, 12)?;
    let result = qmap_markov_dp(&obs.noisy, &cfg)?;

    let all = mse(&clean, &result.estimate, &MseSelection::All)?;
    let middle = mse(&clean, &result.estimate, &MseSelection::Middle)?;
    println!("piecewise-constant source, n = {n}, b = 8, sigma = {sigma}");
    println!("mse/sigma^2: all symbols {:.3}, middle symbol {:.3}", all / (sigma * sigma), middle / (sigma * sigma));

    let truth = recover_structure_markov(&clean, &model, spec);
    let found = recover_structure_markov(&result.estimate, &model, spec);
    let agreement = 1.0 - found.mismatch_rate(&truth)?;
    let true_jumps = truth.fresh_indices().count();
    let found_jumps = found.fresh_indices().count();
    println!("jumps: {true_jumps} in the clean path, {found_jumps} recovered; transition agreement {:.2}%", 100.0 * agreement);

    // a strip-chart of the first 96 symbols: clean level vs estimate
    println!("\nclean path vs estimate (first 96 symbols, '|' marks a recovered jump):");
    let render = |xs: &[f64]| -> String {
        xs.iter().take(96).map(|&x| {
            let level = (x * 10.0) as u32;
            char::from_digit(level.min(9), 10).unwrap()
        }).collect()
    };
    println!("  clean:    {}", render(&clean));
    println!("  estimate: {}", render(&result.estimate));
    let marks: String = (0..96.min(n - 1))
        .map(|i| if found.labels()[i] == 0 { '|' } else { ' ' })
        .collect();
    println!("  jumps:    {marks}");
    Ok(())
}
