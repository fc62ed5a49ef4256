//! The regularizer as a structure indicator: per-bin `r_b = w/b` is about 1
//! on slab bins and O(1/b) on atom bins, tightening as b grows.
//!
//! Run with: `cargo run --release --example regularizer_bounds`

use qmap::source::SpikeSlabModel;
use qmap::weights::normalized_regularizer;
use qmap::QuantSpec;

fn main() -> qmap::Result<()> {
    let model = SpikeSlabModel::single_atom(0.3, 0.5)?;
    let c1 = model.q0().log2().abs();
    let c2 = (1.0 / model.min_atom_mass()).log2();

    println!("spike-slab q0 = 0.3, atom at 0.5 (mass 0.7), uniform slab");
    println!("off-atom bins satisfy |r_b - 1| <= |log2 q0|/b = {c1:.3}/b");
    println!("atom bins satisfy     r_b <= (log2(1/min q_p) + 1)/b = {:.3}/b\n", c2 + 1.0);
    println!("  b   r_b(atom bin)  bound   r_b(off bin)  |r_b-1|  bound");
    for bits in [4, 6, 8, 10, 12] {
        let spec = QuantSpec::new(bits)?;
        let table = model.weights(spec)?;
        let b = bits as f64;
        let r_atom = normalized_regularizer(&[0.5], &table)?;
        let r_off = normalized_regularizer(&[0.123], &table)?;
        println!(
            "  {bits:<3} {r_atom:<14.4} {:<7.4} {r_off:<13.4} {:<8.4} {:.4}",
            (c2 + 1.0) / b,
            (r_off - 1.0).abs(),
            c1 / b
        );
    }

    // exhaustive check over every bin at b = 10
    let spec = QuantSpec::new(10)?;
    let table = model.weights(spec)?;
    let atom_bins = model.atom_bins(spec)?;
    let mut worst_off: f64 = 0.0;
    let mut worst_atom: f64 = 0.0;
    for bin in 0..spec.bin_count() as u32 {
        let mid = spec.bin_lower(bin) + 0.5 * spec.bin_width();
        let r = normalized_regularizer(&[mid], &table)?;
        if atom_bins.contains(&bin) {
            worst_atom = worst_atom.max(r);
        } else {
            worst_off = worst_off.max((r - 1.0).abs());
        }
    }
    println!("\nexhaustive over all 1024 bins at b = 10:");
    println!("  max |r_b - 1| off atoms = {worst_off:.4} (bound {:.4})", c1 / 10.0);
    println!("  max r_b on atoms        = {worst_atom:.4} (bound {:.4})", (c2 + 1.0) / 10.0);
    Ok(())
}
