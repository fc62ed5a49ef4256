//! Error metrics, entropy, and information-dimension estimation.
//!
//! The information dimension of a source is the growth rate of the quantized
//! entropy `H([X]_b)` in `b`; fitting a least-squares slope over a range of
//! `b` removes the O(1) intercept that makes the naive `H/b` ratio converge
//! too slowly at desk-scale bit depths.

use std::fmt;

use crate::error::{QmapError, Result};
use crate::image::GrayImage;
use crate::quant::QuantSpec;
use crate::source::{MarkovModel, SpikeSlabModel};

/// Which indices enter a mean-squared-error computation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MseSelection {
    All,
    /// Only index `floor(n / 2)` (the tracked quantity for pairwise sweeps).
    Middle,
    Indices(Vec<usize>),
}

/// Mean squared error over the selected indices.
pub fn mse(clean: &[f64], estimate: &[f64], select: &MseSelection) -> Result<f64> {
    if clean.len() != estimate.len() {
        return Err(QmapError::LengthMismatch { left: clean.len(), right: estimate.len() });
    }
    if clean.is_empty() {
        return Err(QmapError::SequenceTooShort { len: 0, block: 1 });
    }
    let sq = |i: usize| {
        let d = clean[i] - estimate[i];
        d * d
    };
    match select {
        MseSelection::All => {
            Ok(clean.iter().enumerate().map(|(i, _)| sq(i)).sum::<f64>() / clean.len() as f64)
        }
        MseSelection::Middle => Ok(sq(clean.len() / 2)),
        MseSelection::Indices(idx) => {
            if idx.is_empty() {
                return Err(QmapError::SequenceTooShort { len: 0, block: 1 });
            }
            for &i in idx {
                if i >= clean.len() {
                    return Err(QmapError::LengthMismatch { left: i, right: clean.len() });
                }
            }
            Ok(idx.iter().map(|&i| sq(i)).sum::<f64>() / idx.len() as f64)
        }
    }
}

/// Plug-in Shannon entropy (bits) of the empirical bin distribution.
pub fn entropy_of_quantized(samples: &[f64], spec: QuantSpec) -> Result<f64> {
    if samples.is_empty() {
        return Err(QmapError::SequenceTooShort { len: 0, block: 1 });
    }
    if spec.bits() > 24 {
        return Err(QmapError::BadBits(spec.bits()));
    }
    let mut counts = vec![0u64; spec.bin_count() as usize];
    for &x in samples {
        counts[spec.quantize(x)? as usize] += 1;
    }
    Ok(entropy_of_counts(&counts, samples.len() as u64))
}

fn entropy_of_counts(counts: &[u64], total: u64) -> f64 {
    let n = total as f64;
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.log2()
        })
        .sum()
}

/// Sample-size guard for plug-in entropy: `n >= 100 * cells`.
fn check_plugin_guard(n: usize, cells: u64) -> Result<()> {
    let needed = cells.saturating_mul(100);
    if (n as u64) < needed {
        return Err(QmapError::InsufficientSamples { needed: needed as usize, got: n });
    }
    Ok(())
}

fn check_b_range(bits: &[u32]) -> Result<()> {
    if bits.len() < 4 {
        return Err(QmapError::RangeTooNarrow(4));
    }
    Ok(())
}

/// Least-squares slope of `ys` against `xs`.
pub fn least_squares_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let num: f64 = xs.iter().zip(ys).map(|(&x, &y)| (x - mx) * (y - my)).sum();
    let den: f64 = xs.iter().map(|&x| (x - mx) * (x - mx)).sum();
    num / den
}

/// Information-dimension slope from samples: fit `H([X]_b)` against `b`.
///
/// Requires at least 4 bit depths and `n >= 100 * 2^b` samples at each.
pub fn id_slope_from_samples(samples: &[f64], bits: &[u32]) -> Result<f64> {
    check_b_range(bits)?;
    let mut xs = Vec::with_capacity(bits.len());
    let mut ys = Vec::with_capacity(bits.len());
    for &b in bits {
        let spec = QuantSpec::new(b)?;
        check_plugin_guard(samples.len(), spec.bin_count())?;
        xs.push(b as f64);
        ys.push(entropy_of_quantized(samples, spec)?);
    }
    Ok(least_squares_slope(&xs, &ys))
}

/// Per-depth entropies (for reports): `(b, H([X]_b))` pairs.
pub fn entropy_profile(samples: &[f64], bits: &[u32]) -> Result<Vec<(u32, f64)>> {
    let mut out = Vec::with_capacity(bits.len());
    for &b in bits {
        let spec = QuantSpec::new(b)?;
        check_plugin_guard(samples.len(), spec.bin_count())?;
        out.push((b, entropy_of_quantized(samples, spec)?));
    }
    Ok(out)
}

/// Exact `H([X]_b)` under a spike-slab model, from analytic bin masses.
pub fn entropy_analytic_iid(model: &SpikeSlabModel, spec: QuantSpec) -> Result<f64> {
    if spec.bits() > 20 {
        return Err(QmapError::BadBits(spec.bits()));
    }
    let mut h = 0.0;
    for bin in 0..spec.bin_count() as u32 {
        let p = model.bin_prob(bin, spec)?;
        if p > 0.0 {
            h -= p * p.log2();
        }
    }
    Ok(h)
}

/// Information-dimension slope from analytic i.i.d. entropies.
pub fn id_slope_analytic_iid(model: &SpikeSlabModel, bits: &[u32]) -> Result<f64> {
    check_b_range(bits)?;
    let xs: Vec<f64> = bits.iter().map(|&b| b as f64).collect();
    let ys: Vec<f64> = bits
        .iter()
        .map(|&b| entropy_analytic_iid(model, QuantSpec::new(b)?))
        .collect::<Result<_>>()?;
    Ok(least_squares_slope(&xs, &ys))
}

/// Exact pairwise conditional entropy `H([X2]_b | [X1]_b)` for a Markov
/// model, the `k = 1` case of the process-level information dimension.
///
/// Uniform-marginal identity-branch models use the two-valued pair
/// distribution in closed form; other models sum the pair table (small `b`).
pub fn markov_conditional_entropy_analytic(model: &MarkovModel, spec: QuantSpec) -> Result<f64> {
    let b = spec.bits();
    if model.has_uniform_marginal() {
        let bins = spec.bin_count() as f64;
        let binw = spec.bin_width();
        let p_diag = model.q0() * binw * binw + (1.0 - model.q0()) * binw;
        let p_off = model.q0() * binw * binw;
        let mut h_pair = -bins * p_diag * p_diag.log2();
        if p_off > 0.0 {
            h_pair -= bins * (bins - 1.0) * p_off * p_off.log2();
        }
        // uniform marginal: H([X1]_b) = b exactly
        Ok(h_pair - b as f64)
    } else {
        if b > 8 {
            return Err(QmapError::BadBits(b));
        }
        let bins = spec.bin_count() as u32;
        let mut h_pair = 0.0;
        let mut h_marg = 0.0;
        for a1 in 0..bins {
            let (lo, hi) = spec.bin_interval(a1)?;
            let mu = model.marginal_mass(lo, hi);
            if mu > 0.0 {
                h_marg -= mu * mu.log2();
            }
            for a2 in 0..bins {
                let p = model.pair_prob(a1, a2, spec)?;
                if p > 0.0 {
                    h_pair -= p * p.log2();
                }
            }
        }
        Ok(h_pair - h_marg)
    }
}

/// Slope of the pairwise conditional entropy against `b`.
pub fn id_slope_analytic_markov(model: &MarkovModel, bits: &[u32]) -> Result<f64> {
    check_b_range(bits)?;
    let xs: Vec<f64> = bits.iter().map(|&b| b as f64).collect();
    let ys: Vec<f64> = bits
        .iter()
        .map(|&b| markov_conditional_entropy_analytic(model, QuantSpec::new(b)?))
        .collect::<Result<_>>()?;
    Ok(least_squares_slope(&xs, &ys))
}

/// Pairwise conditional entropy from sampled path pairs (plug-in).
/// Guarded by `n >= 100 * 2^(2b)` since pair cells multiply.
pub fn markov_conditional_entropy_sampled(path: &[f64], spec: QuantSpec) -> Result<f64> {
    if path.len() < 2 {
        return Err(QmapError::SequenceTooShort { len: path.len(), block: 2 });
    }
    let b = spec.bits();
    if b > 12 {
        return Err(QmapError::BadBits(b));
    }
    let pairs = path.len() - 1;
    let cells = spec.bin_count() * spec.bin_count();
    check_plugin_guard(pairs, cells)?;
    let bins = spec.bin_count() as usize;
    let mut pair_counts = vec![0u64; bins * bins];
    let mut marg_counts = vec![0u64; bins];
    for w in path.windows(2) {
        let a1 = spec.quantize(w[0])? as usize;
        let a2 = spec.quantize(w[1])? as usize;
        pair_counts[a1 * bins + a2] += 1;
        marg_counts[a1] += 1;
    }
    let h_pair = entropy_of_counts(&pair_counts, pairs as u64);
    let h_marg = entropy_of_counts(&marg_counts, pairs as u64);
    Ok(h_pair - h_marg)
}

// ---------------------------------------------------------------------------
// Sweep records
// ---------------------------------------------------------------------------

/// One Monte-Carlo sweep row.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRecord {
    pub sigma: f64,
    pub lambda: f64,
    pub b: u32,
    pub n: usize,
    pub trials: usize,
    pub mse: f64,
    /// `mse / sigma^2`, by construction.
    pub ratio: f64,
    pub structure_error_rate: f64,
    /// Standard error of the ratio: `std(per-trial sq err) / sqrt(trials) / sigma^2`.
    pub stderr: f64,
    pub wall_time_s: f64,
}

impl SweepRecord {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        sigma: f64,
        lambda: f64,
        b: u32,
        n: usize,
        trials: usize,
        mse: f64,
        structure_error_rate: f64,
        stderr: f64,
        wall_time_s: f64,
    ) -> Self {
        Self {
            sigma,
            lambda,
            b,
            n,
            trials,
            mse,
            ratio: mse / (sigma * sigma),
            structure_error_rate,
            stderr,
            wall_time_s,
        }
    }

    pub const CSV_HEADER: &'static str =
        "sigma,lambda,b,n,trials,mse,ratio,structure_error_rate,stderr,wall_time_s";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.sigma,
            self.lambda,
            self.b,
            self.n,
            self.trials,
            self.mse,
            self.ratio,
            self.structure_error_rate,
            self.stderr,
            self.wall_time_s
        )
    }
}

/// Render records as CSV, sorted by `(sigma, b)` ascending.
pub fn records_to_csv(records: &[SweepRecord]) -> String {
    let mut rows: Vec<&SweepRecord> = records.iter().collect();
    rows.sort_by(|a, b| {
        a.sigma
            .partial_cmp(&b.sigma)
            .unwrap()
            .then(a.b.cmp(&b.b))
    });
    let mut out = String::from(SweepRecord::CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&r.csv_row());
        out.push('\n');
    }
    out
}

/// One point of a ratio-versus-sigma curve.
#[derive(Debug, Clone, PartialEq)]
pub struct RatioCurvePoint {
    pub sigma: f64,
    pub ratio: f64,
    pub stderr: f64,
}

/// Ratio as a function of sigma (records must share `b`).
pub fn ratio_curve(records: &[SweepRecord]) -> Result<Vec<RatioCurvePoint>> {
    if records.is_empty() {
        return Ok(Vec::new());
    }
    let b = records[0].b;
    if records.iter().any(|r| r.b != b) {
        return Err(QmapError::DimensionMismatch("ratio_curve needs records sharing b".into()));
    }
    let mut pts: Vec<RatioCurvePoint> = records
        .iter()
        .map(|r| RatioCurvePoint { sigma: r.sigma, ratio: r.ratio, stderr: r.stderr })
        .collect();
    pts.sort_by(|a, b| a.sigma.partial_cmp(&b.sigma).unwrap());
    Ok(pts)
}

impl fmt::Display for RatioCurvePoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "sigma={:<8} ratio={:.4} (se {:.4})", self.sigma, self.ratio, self.stderr)
    }
}

// ---------------------------------------------------------------------------
// PSNR
// ---------------------------------------------------------------------------

/// Peak signal-to-noise ratio in dB; identical images give `+inf`.
pub fn psnr(reference: &GrayImage, test: &GrayImage, peak: f64) -> Result<f64> {
    if reference.width() != test.width() || reference.height() != test.height() {
        return Err(QmapError::DimensionMismatch(format!(
            "{}x{} vs {}x{}",
            reference.width(),
            reference.height(),
            test.width(),
            test.height()
        )));
    }
    if !(peak > 0.0) {
        return Err(QmapError::BadModel(format!("peak {peak} must be positive")));
    }
    let n = reference.samples().len() as f64;
    let mse: f64 = reference
        .samples()
        .iter()
        .zip(test.samples())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / n;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (peak * peak / mse).log10())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::source::Density;
    use rand::Rng;

    fn spec(bits: u32) -> QuantSpec {
        QuantSpec::new(bits).unwrap()
    }

    #[test]
    fn mse_basics() {
        let a = vec![0.0; 5];
        assert_eq!(mse(&a, &a, &MseSelection::All).unwrap(), 0.0);
        let c = vec![0.2; 5];
        assert!((mse(&a, &c, &MseSelection::All).unwrap() - 0.04).abs() < 1e-15);
        // middle of n=5 is index 2
        let mut e = vec![0.0; 5];
        e[2] = 0.5;
        assert_eq!(mse(&a, &e, &MseSelection::Middle).unwrap(), 0.25);
        assert_eq!(mse(&a, &e, &MseSelection::Indices(vec![0, 2])).unwrap(), 0.125);
        assert!(mse(&a, &[0.0; 4], &MseSelection::All).is_err());
    }

    #[test]
    fn entropy_basics() {
        let s = spec(3);
        assert_eq!(entropy_of_quantized(&[0.2; 100], s).unwrap(), 0.0);
        let two = [vec![0.1; 50], vec![0.9; 50]].concat();
        assert!((entropy_of_quantized(&two, spec(1)).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn entropy_uniform_samples() {
        let mut rng = crate::rng::rng_from_seed(6);
        let xs: Vec<f64> = (0..1_000_000).map(|_| rng.gen()).collect();
        let h = entropy_of_quantized(&xs, spec(3)).unwrap();
        assert!((h - 3.0).abs() < 0.01, "H={h}");
    }

    #[test]
    fn entropy_monotone_in_bits() {
        let mut rng = crate::rng::rng_from_seed(61);
        let xs: Vec<f64> = (0..200_000).map(|_| rng.gen::<f64>().powi(2)).collect();
        let mut last = 0.0;
        for b in 1..=8 {
            let h = entropy_of_quantized(&xs, spec(b)).unwrap();
            assert!(h >= last - 1e-12);
            assert!(h <= b as f64 + 1e-12);
            last = h;
        }
    }

    #[test]
    fn id_slope_flat_for_atomic_model() {
        let m = SpikeSlabModel::new(0.0, vec![(0.25, 0.5), (0.75, 0.5)], Density::Uniform).unwrap();
        let bits: Vec<u32> = (6..=12).collect();
        let slope = id_slope_analytic_iid(&m, &bits).unwrap();
        assert!(slope.abs() < 0.01, "slope {slope}");
        let (xs, _) = m.sample(500_000, 2);
        let slope = id_slope_from_samples(&xs, &bits).unwrap();
        assert!(slope.abs() < 0.01, "sampled slope {slope}");
    }

    #[test]
    fn id_slope_uniform_is_one() {
        let mut rng = crate::rng::rng_from_seed(8);
        let xs: Vec<f64> = (0..1_000_000).map(|_| rng.gen()).collect();
        let bits: Vec<u32> = (6..=12).collect();
        let slope = id_slope_from_samples(&xs, &bits).unwrap();
        assert!((slope - 1.0).abs() < 0.02, "slope {slope}");
    }

    #[test]
    fn id_slope_spike_slab_tracks_q0() {
        let m = SpikeSlabModel::single_atom(0.3, 0.5).unwrap();
        let bits: Vec<u32> = (6..=12).collect();
        // analytic check first: H = h(masses) + q0 * b + O(b 2^-b) for a
        // uniform slab; the tail term bends the fit by under 0.01 here
        let slope = id_slope_analytic_iid(&m, &bits).unwrap();
        assert!((slope - 0.3).abs() < 0.02, "analytic slope {slope}");
        let (xs, _) = m.sample(1_000_000, 9);
        let slope = id_slope_from_samples(&xs, &bits).unwrap();
        assert!((slope - 0.3).abs() < 0.05, "sampled slope {slope}");
    }

    #[test]
    fn id_slope_stable_under_doubling_n() {
        let m = SpikeSlabModel::single_atom(0.3, 0.5).unwrap();
        let bits: Vec<u32> = (6..=12).collect();
        let (xs, _) = m.sample(2_000_000, 14);
        let slope_full = id_slope_from_samples(&xs, &bits).unwrap();
        let slope_half = id_slope_from_samples(&xs[..1_000_000], &bits).unwrap();
        assert!(
            (slope_full - slope_half).abs() <= 0.01,
            "slope moved from {slope_half} to {slope_full}"
        );
    }

    #[test]
    fn id_slope_guards() {
        let xs = vec![0.5; 1000];
        assert!(matches!(
            id_slope_from_samples(&xs, &[4, 5, 6]),
            Err(QmapError::RangeTooNarrow(_))
        ));
        assert!(matches!(
            id_slope_from_samples(&xs, &[4, 5, 6, 7]),
            Err(QmapError::InsufficientSamples { .. })
        ));
    }

    #[test]
    fn markov_conditional_entropy_closed_form_matches_slope() {
        let m = MarkovModel::piecewise_constant(0.1).unwrap();
        let bits: Vec<u32> = (6..=12).collect();
        let slope = id_slope_analytic_markov(&m, &bits).unwrap();
        assert!((slope - 0.1).abs() < 0.005, "slope {slope}");
    }

    #[test]
    fn markov_conditional_entropy_sampled_agrees_at_small_b() {
        let m = MarkovModel::piecewise_constant(0.2).unwrap();
        let (path, _) = m.sample(1_000_000, 44);
        for b in [3, 4, 5] {
            let s = spec(b);
            let sampled = markov_conditional_entropy_sampled(&path, s).unwrap();
            let analytic = markov_conditional_entropy_analytic(&m, s).unwrap();
            assert!(
                (sampled - analytic).abs() < 0.01,
                "b={b} sampled={sampled} analytic={analytic}"
            );
        }
        // guard: pair cells blow past the sample budget
        assert!(matches!(
            markov_conditional_entropy_sampled(&path, spec(8)),
            Err(QmapError::InsufficientSamples { .. })
        ));
    }

    #[test]
    fn sweep_record_ratio_and_csv() {
        let r = SweepRecord::new(0.1, 0.0316, 12, 1, 1000, 0.004, 0.01, 0.0002, 0.0);
        assert_eq!(r.ratio, 0.004 / (0.1 * 0.1));
        let rows = vec![
            SweepRecord::new(0.1, 0.1, 8, 1, 10, 0.001, 0.0, 0.0, 0.0),
            SweepRecord::new(0.01, 0.1, 8, 1, 10, 0.001, 0.0, 0.0, 0.0),
            SweepRecord::new(0.01, 0.1, 6, 1, 10, 0.001, 0.0, 0.0, 0.0),
        ];
        let csv = records_to_csv(&rows);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], SweepRecord::CSV_HEADER);
        assert!(lines[1].starts_with("0.01,0.1,6"));
        assert!(lines[2].starts_with("0.01,0.1,8"));
        assert!(lines[3].starts_with("0.1,0.1,8"));
    }

    #[test]
    fn ratio_curve_sorts_and_checks() {
        let rows = vec![
            SweepRecord::new(0.1, 0.0, 8, 1, 10, 0.009, 0.0, 1e-4, 0.0),
            SweepRecord::new(0.01, 0.0, 8, 1, 10, 3e-5, 0.0, 1e-6, 0.0),
        ];
        let curve = ratio_curve(&rows).unwrap();
        assert_eq!(curve.len(), 2);
        assert!(curve[0].sigma < curve[1].sigma);
        let bad = vec![
            SweepRecord::new(0.1, 0.0, 8, 1, 10, 0.009, 0.0, 1e-4, 0.0),
            SweepRecord::new(0.1, 0.0, 9, 1, 10, 0.009, 0.0, 1e-4, 0.0),
        ];
        assert!(ratio_curve(&bad).is_err());
    }

    #[test]
    fn psnr_cases() {
        let a = GrayImage::from_fn(8, 8, |_, _| 0.5);
        assert_eq!(psnr(&a, &a, 1.0).unwrap(), f64::INFINITY);
        let b = GrayImage::from_fn(8, 8, |_, _| 0.5 - 0.01);
        let v = psnr(&a, &b, 1.0).unwrap();
        assert!((v - 40.0).abs() < 1e-9, "psnr {v}");
        // mse equal to peak^2 gives 0 dB
        let z = GrayImage::from_fn(8, 8, |_, _| 0.0);
        let o = GrayImage::from_fn(8, 8, |_, _| 1.0);
        assert!((psnr(&z, &o, 1.0).unwrap() - 0.0).abs() < 1e-12);
        let c = GrayImage::from_fn(4, 8, |_, _| 0.5);
        assert!(psnr(&a, &c, 1.0).is_err());
    }
}
