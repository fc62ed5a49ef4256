//! A reproducible Monte-Carlo sweep: the ratio `mse/sigma^2` as sigma falls,
//! with matched conditional-mean oracle rows, written as CSV.
//!
//! Run with: `cargo run --release --example sweep_csv`

use qmap::harness::{run_sweep_iid, LambdaRule, SweepIidConfig};
use qmap::metrics::ratio_curve;
use qmap::source::SpikeSlabModel;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = SweepIidConfig {
        model: SpikeSlabModel::single_atom(0.3, 0.5)?,
        sigmas: vec![0.1, 0.05, 0.02, 0.01],
        bits: vec![12],
        lambda_rule: LambdaRule::SigmaThreeHalves,
        trials: 20_000,
        out: None,
        timing: false,
    };
    let out = run_sweep_iid(&cfg, 7)?;

    println!("# q-map rows");
    print!("{}", out.qmap_csv);
    println!("# conditional-mean oracle rows");
    print!("{}", out.mmse_csv);

    println!("\nratio curve (toward q0 = {} as sigma -> 0):", cfg.model.q0());
    for point in ratio_curve(&out.qmap)? {
        println!("  {point}");
    }
    Ok(())
}
