//! Information-dimension estimation: quantized entropy slopes for the three
//! canonical sources.
//!
//! Run with: `cargo run --release --example id_estimate`

use qmap::metrics::{entropy_profile, id_slope_from_samples, id_slope_analytic_markov};
use qmap::source::{Density, MarkovModel, SpikeSlabModel};

fn main() -> qmap::Result<()> {
    let bits: Vec<u32> = (6..=12).collect();
    let n = 1_000_000;

    println!("plug-in entropy H([X]_b) and fitted slope (the information dimension):\n");

    let cases = [
        ("spike-slab q0 = 0.3", SpikeSlabModel::single_atom(0.3, 0.5)?, 0.3),
        ("uniform (q0 = 1)", SpikeSlabModel::continuous(Density::Uniform), 1.0),
        ("two atoms only (q0 = 0)", SpikeSlabModel::new(0.0, vec![(0.25, 0.5), (0.75, 0.5)], Density::Uniform)?, 0.0),
    ];
    for (name, model, expected) in &cases {
        let (xs, _) = model.sample(n, 4242);
        let profile = entropy_profile(&xs, &bits)?;
        let slope = id_slope_from_samples(&xs, &bits)?;
        print!("{name:<26}");
        for (b, h) in &profile {
            print!(" H_{b}={h:.2}");
        }
        println!("\n{:<26} slope = {slope:.4} (expected {expected})\n", "");
    }

    // first-order Markov: pairwise conditional entropy, analytic route
    let markov = MarkovModel::piecewise_constant(0.1)?;
    let slope = id_slope_analytic_markov(&markov, &bits)?;
    println!("piecewise-constant Markov  H([X2]_b | [X1]_b) slope = {slope:.4} (expected {})", markov.q0());
    Ok(())
}
