//! Generative source models and their analytic bin probabilities.
//!
//! Two families are supported: spike-slab i.i.d. mixtures (point masses plus
//! an absolutely continuous slab) and first-order Markov processes whose next
//! symbol either follows a Lipschitz branch map of the current one or is
//! freshly drawn from the continuous density. Both expose exact bin (and bin
//! pair) probabilities, which is what ideal weight tables are built from.

use std::collections::BTreeMap;
use std::sync::{Arc, OnceLock};

use rand::Rng as _;
use rand_distr::{Distribution, Normal};

use crate::error::{QmapError, Result};
use crate::quant::QuantSpec;
use crate::rng::{rng_from_seed, Rng};
use crate::weights::{BlockKey, WeightTable};

const MASS_TOL: f64 = 1e-12;
/// Stand-in mass for impossible blocks, so default weights stay finite.
const IMPOSSIBLE_MASS: f64 = f64::MIN_POSITIVE;
/// Internal seed for the cached stationary-marginal estimate.
const MARGINAL_SEED: u64 = 0x51A3_C0DE_0BAD_F00D;
const MARGINAL_PATH_LEN: usize = 1_000_000;
const MARGINAL_HIST_BITS: u32 = 14;
/// Subcells per bin when integrating branch inverse images.
const PAIR_QUADRATURE_CELLS: usize = 64;

/// Continuous component on `(0, 1)` with known bounded density.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Density {
    /// Uniform density, `pdf = 1`.
    Uniform,
    /// `pdf(x) = 6x(1-x)`; exercises the quadrature paths.
    Parabolic,
}

impl Density {
    pub fn pdf(&self, x: f64) -> f64 {
        match self {
            Density::Uniform => {
                if (0.0..1.0).contains(&x) {
                    1.0
                } else {
                    0.0
                }
            }
            Density::Parabolic => {
                if (0.0..1.0).contains(&x) {
                    6.0 * x * (1.0 - x)
                } else {
                    0.0
                }
            }
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        let x = x.clamp(0.0, 1.0);
        match self {
            Density::Uniform => x,
            Density::Parabolic => x * x * (3.0 - 2.0 * x),
        }
    }

    /// Mass of the interval `[lo, hi)` intersected with the support.
    pub fn mass_on(&self, lo: f64, hi: f64) -> f64 {
        if hi <= lo {
            return 0.0;
        }
        (self.cdf(hi) - self.cdf(lo)).max(0.0)
    }

    pub fn sup(&self) -> f64 {
        match self {
            Density::Uniform => 1.0,
            Density::Parabolic => 1.5,
        }
    }

    pub fn sample(&self, rng: &mut Rng) -> f64 {
        match self {
            Density::Uniform => rng.gen(),
            Density::Parabolic => loop {
                // rejection from the uniform envelope at the density sup
                let x: f64 = rng.gen();
                let u: f64 = rng.gen::<f64>() * self.sup();
                if u <= self.pdf(x) {
                    return x;
                }
            },
        }
    }

    fn parse(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(Density::Uniform),
            "parabolic" => Ok(Density::Parabolic),
            other => Err(QmapError::Parse(format!("unknown density `{other}`"))),
        }
    }
}

/// Hidden branch labels accompanying a sample path.
///
/// Label `p > 0` names the atom (i.i.d.) or branch map (Markov) that produced
/// the symbol/transition; 0 marks a fresh draw from the continuous density.
/// I.i.d. paths carry one label per symbol; Markov paths carry one label per
/// transition (`labels[i]` describes how `x[i+1]` follows from `x[i]`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StructurePath {
    labels: Vec<u32>,
}

impl StructurePath {
    pub fn new(labels: Vec<u32>) -> Self {
        Self { labels }
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Indices carrying the continuous label 0.
    pub fn fresh_indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.labels
            .iter()
            .enumerate()
            .filter(|(_, &l)| l == 0)
            .map(|(i, _)| i)
    }

    /// Fraction of positions where the two label sequences disagree.
    pub fn mismatch_rate(&self, other: &StructurePath) -> Result<f64> {
        if self.len() != other.len() {
            return Err(QmapError::LengthMismatch { left: self.len(), right: other.len() });
        }
        if self.is_empty() {
            return Ok(0.0);
        }
        let bad = self
            .labels
            .iter()
            .zip(&other.labels)
            .filter(|(a, b)| a != b)
            .count();
        Ok(bad as f64 / self.len() as f64)
    }
}

/// A clean/noisy pair tied to the seed that produced the noise.
#[derive(Debug, Clone)]
pub struct NoisyObservation {
    pub clean: Vec<f64>,
    pub noisy: Vec<f64>,
    pub sigma: f64,
    pub seed: u64,
}

/// Add i.i.d. Gaussian noise of standard deviation `sigma`.
pub fn corrupt(clean: &[f64], sigma: f64, seed: u64) -> Result<NoisyObservation> {
    if !(sigma > 0.0) {
        return Err(QmapError::BadSigma(sigma));
    }
    let mut rng = rng_from_seed(seed);
    let normal = Normal::new(0.0, sigma).expect("sigma validated");
    let noisy = clean.iter().map(|&x| x + normal.sample(&mut rng)).collect();
    Ok(NoisyObservation { clean: clean.to_vec(), noisy, sigma, seed })
}

// ---------------------------------------------------------------------------
// Spike-slab i.i.d. model
// ---------------------------------------------------------------------------

/// I.i.d. mixture: mass `q0` on a continuous density plus point atoms.
#[derive(Debug, Clone, PartialEq)]
pub struct SpikeSlabModel {
    q0: f64,
    atoms: Vec<(f64, f64)>,
    density: Density,
}

impl SpikeSlabModel {
    /// `atoms` are `(location, mass)` pairs with locations in `[0, 1)`.
    /// Masses must sum to 1 with `q0`.
    pub fn new(q0: f64, atoms: Vec<(f64, f64)>, density: Density) -> Result<Self> {
        if !(0.0..=1.0).contains(&q0) {
            return Err(QmapError::BadModel(format!("q0 = {q0} outside [0, 1]")));
        }
        let mut total = q0;
        for &(x, q) in &atoms {
            if !(0.0..1.0).contains(&x) {
                return Err(QmapError::BadModel(format!("atom location {x} outside [0, 1)")));
            }
            if !(q > 0.0) {
                return Err(QmapError::BadModel(format!("atom mass {q} not positive")));
            }
            total += q;
        }
        if (total - 1.0).abs() > MASS_TOL {
            return Err(QmapError::BadModel(format!("masses sum to {total}, expected 1")));
        }
        for i in 0..atoms.len() {
            for j in (i + 1)..atoms.len() {
                if atoms[i].0 == atoms[j].0 {
                    return Err(QmapError::BadModel(format!("duplicate atom at {}", atoms[i].0)));
                }
            }
        }
        if q0 == 0.0 && atoms.is_empty() {
            return Err(QmapError::BadModel("model has no mass".into()));
        }
        Ok(Self { q0, atoms, density })
    }

    /// Uniform slab with a single atom; the workhorse test model.
    pub fn single_atom(q0: f64, atom: f64) -> Result<Self> {
        SpikeSlabModel::new(q0, vec![(atom, 1.0 - q0)], Density::Uniform)
    }

    /// Sparse source: atom at 0 with mass `1 - q0`, uniform slab.
    pub fn sparse(q0: f64) -> Result<Self> {
        SpikeSlabModel::new(q0, vec![(0.0, 1.0 - q0)], Density::Uniform)
    }

    /// Purely continuous model (`q0 = 1`).
    pub fn continuous(density: Density) -> Self {
        Self { q0: 1.0, atoms: Vec::new(), density }
    }

    pub fn q0(&self) -> f64 {
        self.q0
    }

    pub fn atoms(&self) -> &[(f64, f64)] {
        &self.atoms
    }

    pub fn density(&self) -> Density {
        self.density
    }

    pub fn min_atom_mass(&self) -> f64 {
        self.atoms.iter().map(|&(_, q)| q).fold(f64::INFINITY, f64::min)
    }

    /// Distance from `u` to the closest atom.
    pub fn structure_distance(&self, u: f64) -> f64 {
        self.atoms
            .iter()
            .map(|&(x, _)| (u - x).abs())
            .fold(f64::INFINITY, f64::min)
    }

    /// Sample `n` symbols; labels name the atom (1-based) or 0 for slab draws.
    pub fn sample(&self, n: usize, seed: u64) -> (Vec<f64>, StructurePath) {
        let mut rng = rng_from_seed(seed);
        let mut xs = Vec::with_capacity(n);
        let mut labels = Vec::with_capacity(n);
        for _ in 0..n {
            let (x, label) = self.draw(&mut rng);
            xs.push(x);
            labels.push(label);
        }
        (xs, StructurePath::new(labels))
    }

    /// Draw one symbol from a caller-owned stream (sweep workers use this
    /// to share a trial's stream between the symbol and its noise).
    pub fn sample_one(&self, rng: &mut Rng) -> (f64, u32) {
        self.draw(rng)
    }

    fn draw(&self, rng: &mut Rng) -> (f64, u32) {
        let r: f64 = rng.gen();
        if r < self.q0 {
            return (self.density.sample(rng), 0);
        }
        let mut cum = self.q0;
        for (p, &(x, q)) in self.atoms.iter().enumerate() {
            cum += q;
            if r < cum {
                return (x, (p + 1) as u32);
            }
        }
        // r landed in the rounding slack past the last atom
        let last = self.atoms.len();
        (self.atoms[last - 1].0, last as u32)
    }

    /// Exact mass of a quantizer bin under the model.
    pub fn bin_prob(&self, bin: u32, spec: QuantSpec) -> Result<f64> {
        let (lo, hi) = spec.bin_interval(bin)?;
        let mut p = self.q0 * self.density.mass_on(lo, hi);
        for &(x, q) in &self.atoms {
            if lo <= x && x < hi {
                p += q;
            }
        }
        Ok(p)
    }

    /// Bins containing at least one atom.
    pub fn atom_bins(&self, spec: QuantSpec) -> Result<Vec<u32>> {
        let mut bins: Vec<u32> = self
            .atoms
            .iter()
            .map(|&(x, _)| spec.quantize(x))
            .collect::<Result<_>>()?;
        bins.sort_unstable();
        bins.dedup();
        Ok(bins)
    }

    /// Ideal single-symbol weight table at resolution `spec`.
    ///
    /// With a uniform slab every atom-free bin has the same mass, so only
    /// atom bins are stored and the shared mass becomes the default. Other
    /// densities store all bins (default = smallest bin mass).
    pub fn weights(&self, spec: QuantSpec) -> Result<WeightTable> {
        let mut dist: BTreeMap<BlockKey, f64> = BTreeMap::new();
        if self.density == Density::Uniform && !self.atoms.is_empty() {
            for &bin in &self.atom_bins(spec)? {
                dist.insert(BlockKey::single(bin), self.bin_prob(bin, spec)?);
            }
            let off_mass = self.q0 * spec.bin_width();
            let default = if off_mass > 0.0 { off_mass } else { IMPOSSIBLE_MASS };
            // a model with exactly one atom bin covering everything would
            // leave no off bins, but default still needs a value
            WeightTable::from_dist(&dist, default.min(dist.values().copied().fold(f64::INFINITY, f64::min)), spec)
        } else {
            if spec.bits() > 16 {
                return Err(QmapError::TooLarge { bits: spec.bits(), limit: 16 });
            }
            let mut min_mass = f64::INFINITY;
            for bin in 0..spec.bin_count() as u32 {
                let p = self.bin_prob(bin, spec)?;
                if p > 0.0 {
                    dist.insert(BlockKey::single(bin), p);
                    min_mass = min_mass.min(p);
                }
            }
            WeightTable::from_dist(&dist, min_mass.min(1.0), spec)
        }
    }
}

// ---------------------------------------------------------------------------
// First-order Markov model
// ---------------------------------------------------------------------------

/// Lipschitz branch map on `[0, 1)`.
#[derive(Debug, Clone, PartialEq)]
pub enum BranchFn {
    Identity,
    /// `x -> a*x + c`.
    Affine { a: f64, c: f64 },
    /// Piecewise-linear interpolation through `(xs[i], ys[i])`.
    Tabulated { xs: Vec<f64>, ys: Vec<f64> },
}

impl BranchFn {
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            BranchFn::Identity => x,
            BranchFn::Affine { a, c } => a * x + c,
            BranchFn::Tabulated { xs, ys } => {
                if x <= xs[0] {
                    return ys[0];
                }
                if x >= *xs.last().unwrap() {
                    return *ys.last().unwrap();
                }
                let i = xs.partition_point(|&t| t <= x) - 1;
                let t = (x - xs[i]) / (xs[i + 1] - xs[i]);
                ys[i] + t * (ys[i + 1] - ys[i])
            }
        }
    }

    pub fn lipschitz(&self) -> f64 {
        match self {
            BranchFn::Identity => 1.0,
            BranchFn::Affine { a, .. } => a.abs(),
            BranchFn::Tabulated { xs, ys } => xs
                .windows(2)
                .zip(ys.windows(2))
                .map(|(xw, yw)| ((yw[1] - yw[0]) / (xw[1] - xw[0])).abs())
                .fold(0.0, f64::max),
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            BranchFn::Identity => Ok(()),
            BranchFn::Affine { a, c } => {
                let lo = c.min(a + c);
                let hi = c.max(a + c);
                if lo < 0.0 || hi > 1.0 {
                    return Err(QmapError::BadModel(format!(
                        "affine branch {a}*x + {c} leaves [0, 1)"
                    )));
                }
                Ok(())
            }
            BranchFn::Tabulated { xs, ys } => {
                if xs.len() < 2 || xs.len() != ys.len() {
                    return Err(QmapError::BadModel("tabulated branch needs >= 2 points".into()));
                }
                if !xs.windows(2).all(|w| w[0] < w[1]) {
                    return Err(QmapError::BadModel("tabulated xs must be strictly increasing".into()));
                }
                if ys.iter().any(|&y| !(0.0..1.0).contains(&y)) {
                    return Err(QmapError::BadModel("tabulated ys must lie in [0, 1)".into()));
                }
                Ok(())
            }
        }
    }
}

/// Stationary first-order Markov source: with probability `q_p` the next
/// symbol is `f_p(x)`, otherwise (probability `q0`) a fresh draw from the
/// continuous density.
#[derive(Debug, Clone)]
pub struct MarkovModel {
    q0: f64,
    branches: Vec<(BranchFn, f64)>,
    density: Density,
    lipschitz: f64,
    marginal_cache: Arc<OnceLock<Vec<f64>>>,
}

impl PartialEq for MarkovModel {
    fn eq(&self, other: &Self) -> bool {
        self.q0 == other.q0
            && self.branches == other.branches
            && self.density == other.density
            && self.lipschitz == other.lipschitz
    }
}

impl MarkovModel {
    pub fn new(q0: f64, branches: Vec<(BranchFn, f64)>, density: Density) -> Result<Self> {
        if !(0.0..=1.0).contains(&q0) {
            return Err(QmapError::BadModel(format!("q0 = {q0} outside [0, 1]")));
        }
        let mut total = q0;
        for (f, q) in &branches {
            f.validate()?;
            if !(*q > 0.0) {
                return Err(QmapError::BadModel(format!("branch mass {q} not positive")));
            }
            total += q;
        }
        if (total - 1.0).abs() > MASS_TOL {
            return Err(QmapError::BadModel(format!("masses sum to {total}, expected 1")));
        }
        if q0 == 0.0 && branches.is_empty() {
            return Err(QmapError::BadModel("model has no mass".into()));
        }
        let lipschitz = branches.iter().map(|(f, _)| f.lipschitz()).fold(1.0, f64::max);
        Ok(Self {
            q0,
            branches,
            density,
            lipschitz,
            marginal_cache: Arc::new(OnceLock::new()),
        })
    }

    /// The piecewise-constant family: a single identity branch, so runs stay
    /// at their value until a fresh draw ends them.
    pub fn piecewise_constant(q0: f64) -> Result<Self> {
        if !(q0 > 0.0) {
            return Err(QmapError::BadModel("piecewise-constant model needs q0 > 0".into()));
        }
        MarkovModel::new(q0, vec![(BranchFn::Identity, 1.0 - q0)], Density::Uniform)
    }

    pub fn q0(&self) -> f64 {
        self.q0
    }

    pub fn branches(&self) -> &[(BranchFn, f64)] {
        &self.branches
    }

    pub fn density(&self) -> Density {
        self.density
    }

    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    /// Distance from the pair `(u1, u2)` to the closest branch image.
    pub fn structure_distance(&self, u1: f64, u2: f64) -> f64 {
        self.branches
            .iter()
            .map(|(f, _)| (u2 - f.eval(u1)).abs())
            .fold(f64::INFINITY, f64::min)
    }

    /// Sample a path of length `n`. `labels[i]` (length `n - 1`) records how
    /// `x[i+1]` was produced from `x[i]`.
    pub fn sample(&self, n: usize, seed: u64) -> (Vec<f64>, StructurePath) {
        let mut rng = rng_from_seed(seed);
        let mut xs = Vec::with_capacity(n);
        let mut labels = Vec::with_capacity(n.saturating_sub(1));
        if n == 0 {
            return (xs, StructurePath::new(labels));
        }
        xs.push(self.density.sample(&mut rng));
        for _ in 1..n {
            let prev = *xs.last().unwrap();
            let r: f64 = rng.gen();
            if r < self.q0 {
                xs.push(self.density.sample(&mut rng));
                labels.push(0);
            } else {
                let mut cum = self.q0;
                let mut chosen = self.branches.len(); // rounding fallback
                for (p, (_, q)) in self.branches.iter().enumerate() {
                    cum += q;
                    if r < cum {
                        chosen = p + 1;
                        break;
                    }
                }
                let f = &self.branches[chosen - 1].0;
                xs.push(f.eval(prev));
                labels.push(chosen as u32);
            }
        }
        (xs, StructurePath::new(labels))
    }

    /// The stationary marginal is exactly uniform when the density is uniform
    /// and every branch is the identity; otherwise it is estimated once from
    /// a long path and cached.
    pub fn has_uniform_marginal(&self) -> bool {
        self.density == Density::Uniform
            && self.branches.iter().all(|(f, _)| matches!(f, BranchFn::Identity))
    }

    fn marginal_histogram(&self) -> &Vec<f64> {
        self.marginal_cache.get_or_init(|| {
            let cells = 1usize << MARGINAL_HIST_BITS;
            let (path, _) = self.sample(MARGINAL_PATH_LEN, MARGINAL_SEED);
            let mut counts = vec![0u64; cells];
            for &x in &path {
                let i = ((x * cells as f64) as usize).min(cells - 1);
                counts[i] += 1;
            }
            counts
                .into_iter()
                .map(|c| c as f64 / MARGINAL_PATH_LEN as f64)
                .collect()
        })
    }

    /// Stationary mass of `[lo, hi)`.
    pub fn marginal_mass(&self, lo: f64, hi: f64) -> f64 {
        if hi <= lo {
            return 0.0;
        }
        if self.has_uniform_marginal() {
            return hi.min(1.0) - lo.max(0.0);
        }
        let hist = self.marginal_histogram();
        let cells = hist.len() as f64;
        let lo = lo.max(0.0) * cells;
        let hi = hi.min(1.0) * cells;
        let (lo_cell, hi_cell) = (lo.floor() as usize, hi.ceil() as usize);
        let mut mass = 0.0;
        for (i, &h) in hist.iter().enumerate().take(hi_cell.min(hist.len())).skip(lo_cell) {
            let cl = (i as f64).max(lo);
            let ch = ((i + 1) as f64).min(hi);
            if ch > cl {
                mass += h * (ch - cl);
            }
        }
        mass
    }

    /// Exact pair probability `P(X1 in bin a1, X2 in bin a2)`.
    ///
    /// The continuation term integrates each branch's inverse image by
    /// subdividing bin `a1` into equal cells and testing midpoints; for
    /// identity branches and bin-aligned images this is exact, and in general
    /// the error is far below the test tolerances for Lipschitz branches.
    pub fn pair_prob(&self, a1: u32, a2: u32, spec: QuantSpec) -> Result<f64> {
        let (lo1, hi1) = spec.bin_interval(a1)?;
        let (lo2, hi2) = spec.bin_interval(a2)?;
        let mut p = self.q0 * self.marginal_mass(lo1, hi1) * self.density.mass_on(lo2, hi2);
        let sub = (hi1 - lo1) / PAIR_QUADRATURE_CELLS as f64;
        for (f, q) in &self.branches {
            let mut mass = 0.0;
            for i in 0..PAIR_QUADRATURE_CELLS {
                let cl = lo1 + i as f64 * sub;
                let mid = cl + 0.5 * sub;
                let y = f.eval(mid);
                if lo2 <= y && y < hi2 {
                    mass += self.marginal_mass(cl, cl + sub);
                }
            }
            p += q * mass;
        }
        Ok(p)
    }

    /// Ideal pair weight table at resolution `spec`.
    ///
    /// With a uniform marginal and uniform density the pure-continuation mass
    /// `q0 * 2^-2b` is shared by every pair, so only pairs reached by some
    /// branch are stored and that shared mass is the default. Otherwise all
    /// pairs are materialized (guarded to small `b`).
    pub fn weights(&self, spec: QuantSpec) -> Result<WeightTable> {
        let bins = spec.bin_count() as u32;
        if self.has_uniform_marginal() {
            if spec.bits() > 16 {
                return Err(QmapError::TooLarge { bits: spec.bits(), limit: 16 });
            }
            let binw = spec.bin_width();
            let base = self.q0 * binw * binw;
            let sub = binw / PAIR_QUADRATURE_CELLS as f64;
            let submass = sub;
            let mut dist: BTreeMap<BlockKey, f64> = BTreeMap::new();
            for a1 in 0..bins {
                let lo1 = spec.bin_lower(a1);
                let mut touched: BTreeMap<u32, f64> = BTreeMap::new();
                for (f, q) in &self.branches {
                    for i in 0..PAIR_QUADRATURE_CELLS {
                        let mid = lo1 + (i as f64 + 0.5) * sub;
                        let a2 = spec.quantize_clamped(f.eval(mid));
                        *touched.entry(a2).or_insert(0.0) += q * submass;
                    }
                }
                for (a2, branch_mass) in touched {
                    dist.insert(BlockKey::pair(a1, a2), base + branch_mass);
                }
            }
            let default = if base > 0.0 { base } else { IMPOSSIBLE_MASS };
            WeightTable::from_dist(&dist, default, spec)
        } else {
            if spec.bits() > 8 {
                return Err(QmapError::TooLarge { bits: spec.bits(), limit: 8 });
            }
            let mut dist: BTreeMap<BlockKey, f64> = BTreeMap::new();
            let mut min_mass = f64::INFINITY;
            for a1 in 0..bins {
                for a2 in 0..bins {
                    let p = self.pair_prob(a1, a2, spec)?;
                    if p > 0.0 {
                        dist.insert(BlockKey::pair(a1, a2), p);
                        min_mass = min_mass.min(p);
                    }
                }
            }
            if dist.is_empty() {
                return Err(QmapError::BadModel("pair distribution is empty".into()));
            }
            WeightTable::from_dist(&dist, min_mass.min(1.0), spec)
        }
    }
}

// ---------------------------------------------------------------------------
// Model description files
// ---------------------------------------------------------------------------

/// A parsed model file: either source family.
#[derive(Debug, Clone, PartialEq)]
pub enum SourceSpec {
    Iid(SpikeSlabModel),
    Markov(MarkovModel),
}

impl SourceSpec {
    pub fn from_kv(kv: &crate::config::KvFile) -> Result<Self> {
        use crate::config::parse_f64;
        let kind = kv.require("kind")?;
        let q0 = parse_f64(kv.require("q0")?)?;
        let density = Density::parse(kv.get("density").unwrap_or("uniform"))?;
        match kind {
            "iid" => {
                let mut atoms = Vec::new();
                for spec in kv.get_all("atom") {
                    let parts: Vec<&str> = spec.split_whitespace().collect();
                    if parts.len() != 2 {
                        return Err(QmapError::Parse(format!("atom needs `location mass`, got `{spec}`")));
                    }
                    atoms.push((parse_f64(parts[0])?, parse_f64(parts[1])?));
                }
                Ok(SourceSpec::Iid(SpikeSlabModel::new(q0, atoms, density)?))
            }
            "markov" => {
                let mut branches = Vec::new();
                for spec in kv.get_all("branch") {
                    let parts: Vec<&str> = spec.split_whitespace().collect();
                    let branch = match parts.first().copied() {
                        Some("identity") if parts.len() == 2 => {
                            (BranchFn::Identity, parse_f64(parts[1])?)
                        }
                        Some("affine") if parts.len() == 4 => (
                            BranchFn::Affine { a: parse_f64(parts[1])?, c: parse_f64(parts[2])? },
                            parse_f64(parts[3])?,
                        ),
                        Some("tabulated") if parts.len() >= 6 && parts.len() % 2 == 0 => {
                            let mass = parse_f64(parts[1])?;
                            let mut xs = Vec::new();
                            let mut ys = Vec::new();
                            for pair in parts[2..].chunks(2) {
                                xs.push(parse_f64(pair[0])?);
                                ys.push(parse_f64(pair[1])?);
                            }
                            (BranchFn::Tabulated { xs, ys }, mass)
                        }
                        _ => {
                            return Err(QmapError::Parse(format!(
                                "branch needs `identity m`, `affine a c m` or `tabulated m x0 y0 ...`, got `{spec}`"
                            )))
                        }
                    };
                    branches.push(branch);
                }
                let model = MarkovModel::new(q0, branches, density)?;
                if let Some(l) = kv.get("lipschitz") {
                    let l = parse_f64(l)?;
                    if l + 1e-9 < model.lipschitz() {
                        return Err(QmapError::BadModel(format!(
                            "declared lipschitz {l} below the branches' constant {}",
                            model.lipschitz()
                        )));
                    }
                }
                Ok(SourceSpec::Markov(model))
            }
            other => Err(QmapError::Parse(format!("unknown model kind `{other}`"))),
        }
    }

    pub fn from_path(path: impl AsRef<std::path::Path>) -> Result<Self> {
        Self::from_kv(&crate::config::KvFile::from_path(path)?)
    }

    pub fn as_iid(&self) -> Result<&SpikeSlabModel> {
        match self {
            SourceSpec::Iid(m) => Ok(m),
            SourceSpec::Markov(_) => Err(QmapError::BadModel("expected an iid model".into())),
        }
    }

    pub fn as_markov(&self) -> Result<&MarkovModel> {
        match self {
            SourceSpec::Markov(m) => Ok(m),
            SourceSpec::Iid(_) => Err(QmapError::BadModel("expected a markov model".into())),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(bits: u32) -> QuantSpec {
        QuantSpec::new(bits).unwrap()
    }

    #[test]
    fn degenerate_single_atom_path() {
        let m = SpikeSlabModel::new(0.0, vec![(0.5, 1.0)], Density::Uniform).unwrap();
        let (xs, s) = m.sample(100, 9);
        assert!(xs.iter().all(|&x| x == 0.5));
        assert!(s.labels().iter().all(|&l| l == 1));
    }

    #[test]
    fn pure_continuous_matches_programmed_density() {
        for density in [Density::Uniform, Density::Parabolic] {
            let m = SpikeSlabModel::continuous(density);
            let (mut xs, s) = m.sample(100_000, 21);
            assert!(s.labels().iter().all(|&l| l == 0));
            xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
            // Kolmogorov distance against the programmed CDF
            let n = xs.len() as f64;
            let ks = xs
                .iter()
                .enumerate()
                .map(|(i, &x)| {
                    let f = density.cdf(x);
                    let lo = i as f64 / n;
                    let hi = (i + 1) as f64 / n;
                    (f - lo).abs().max((hi - f).abs())
                })
                .fold(0.0, f64::max);
            assert!(ks < 0.01, "KS distance {ks} for {density:?}");
        }
    }

    #[test]
    fn slab_fraction_tracks_q0() {
        let m = SpikeSlabModel::single_atom(0.3, 0.5).unwrap();
        let (_, s) = m.sample(100_000, 5);
        let frac = s.fresh_indices().count() as f64 / s.len() as f64;
        assert!((frac - 0.3).abs() < 0.01, "fraction {frac}");
    }

    #[test]
    fn model_validation_catches_bad_mass() {
        assert!(SpikeSlabModel::new(0.3, vec![(0.5, 0.6)], Density::Uniform).is_err());
        assert!(SpikeSlabModel::new(0.3, vec![(0.5, 0.35), (0.5, 0.35)], Density::Uniform).is_err());
        assert!(SpikeSlabModel::new(1.1, vec![], Density::Uniform).is_err());
        // atom at 0 is allowed (sparse-source family)
        assert!(SpikeSlabModel::sparse(0.3).is_ok());
        assert!(SpikeSlabModel::new(0.3, vec![(1.0, 0.7)], Density::Uniform).is_err());
    }

    #[test]
    fn markov_jump_rate_tracks_q0() {
        let m = MarkovModel::piecewise_constant(0.1).unwrap();
        let (xs, _) = m.sample(100_000, 77);
        let jumps = xs.windows(2).filter(|w| w[0] != w[1]).count();
        let rate = jumps as f64 / xs.len() as f64;
        assert!((rate - 0.1).abs() < 0.02, "jump rate {rate}");
    }

    #[test]
    fn markov_q0_one_is_iid_uniform() {
        let m = MarkovModel::new(1.0, vec![], Density::Uniform).unwrap();
        let (mut xs, s) = m.sample(50_000, 3);
        assert!(s.labels().iter().all(|&l| l == 0));
        xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let n = xs.len() as f64;
        let ks = xs
            .iter()
            .enumerate()
            .map(|(i, &x)| (x - i as f64 / n).abs().max((x - (i + 1) as f64 / n).abs()))
            .fold(0.0, f64::max);
        assert!(ks < 0.012, "KS {ks}");
    }

    #[test]
    fn markov_labels_match_transitions_exactly() {
        let m = MarkovModel::new(
            0.3,
            vec![
                (BranchFn::Identity, 0.4),
                (BranchFn::Affine { a: 0.5, c: 0.25 }, 0.3),
            ],
            Density::Uniform,
        )
        .unwrap();
        let (xs, s) = m.sample(5_000, 13);
        assert_eq!(s.len(), xs.len() - 1);
        for (i, &label) in s.labels().iter().enumerate() {
            if label > 0 {
                let f = &m.branches()[label as usize - 1].0;
                assert_eq!(xs[i + 1], f.eval(xs[i]), "transition {i}");
            }
        }
    }

    #[test]
    fn corrupt_basic_stats() {
        let clean = vec![0.0; 100_000];
        let obs = corrupt(&clean, 0.3, 11).unwrap();
        let n = obs.noisy.len() as f64;
        let mean: f64 = obs.noisy.iter().sum::<f64>() / n;
        assert!(mean.abs() < 3.0 * 0.3 / n.sqrt(), "mean {mean}");
        let again = corrupt(&clean, 0.3, 11).unwrap();
        assert_eq!(obs.noisy, again.noisy);
        assert!(corrupt(&clean, 0.0, 1).is_err());
        assert!(corrupt(&clean, -1.0, 1).is_err());
    }

    #[test]
    fn corrupt_variance_concentrates() {
        let clean = vec![0.25; 1_000_000];
        let obs = corrupt(&clean, 0.05, 404).unwrap();
        let n = obs.noisy.len() as f64;
        let var: f64 = obs
            .noisy
            .iter()
            .zip(&obs.clean)
            .map(|(y, x)| (y - x) * (y - x))
            .sum::<f64>()
            / n;
        assert!((0.00245..=0.00255).contains(&var), "sample variance {var}");
    }

    #[test]
    fn bin_prob_examples() {
        let uniform = SpikeSlabModel::continuous(Density::Uniform);
        for bin in 0..8 {
            assert!((uniform.bin_prob(bin, spec(3)).unwrap() - 0.125).abs() < 1e-15);
        }
        let m = SpikeSlabModel::single_atom(0.3, 0.5).unwrap();
        let p = m.bin_prob(8, spec(4)).unwrap();
        assert!((p - 0.71875).abs() < 1e-15);
    }

    #[test]
    fn bin_probs_sum_to_one() {
        let models = [
            SpikeSlabModel::single_atom(0.3, 0.5).unwrap(),
            SpikeSlabModel::sparse(0.4).unwrap(),
            SpikeSlabModel::new(0.5, vec![(0.25, 0.2), (0.75, 0.3)], Density::Parabolic).unwrap(),
            SpikeSlabModel::continuous(Density::Parabolic),
        ];
        for m in &models {
            for bits in [1, 4, 8] {
                let s = spec(bits);
                let total: f64 = (0..s.bin_count() as u32)
                    .map(|a| m.bin_prob(a, s).unwrap())
                    .sum();
                assert!((total - 1.0).abs() < 1e-12, "total {total}");
            }
        }
    }

    #[test]
    fn iid_monte_carlo_matches_analytic_bins() {
        let m = SpikeSlabModel::single_atom(0.3, 0.5).unwrap();
        let (xs, _) = m.sample(1_000_000, 36);
        let n = xs.len() as f64;
        for bits in [2, 4, 6] {
            let s = spec(bits);
            let mut counts = vec![0u64; s.bin_count() as usize];
            for &x in &xs {
                counts[s.quantize(x).unwrap() as usize] += 1;
            }
            for (bin, &c) in counts.iter().enumerate() {
                let p = m.bin_prob(bin as u32, s).unwrap();
                let se = (p * (1.0 - p) / n).sqrt();
                let emp = c as f64 / n;
                assert!(
                    (emp - p).abs() <= 3.0 * se + 1e-9,
                    "b={bits} bin={bin} emp={emp} p={p}"
                );
            }
        }
    }

    #[test]
    fn pair_prob_identity_closed_form() {
        let m = MarkovModel::piecewise_constant(0.25).unwrap();
        let s = spec(3);
        let binw = s.bin_width();
        for a1 in 0..8 {
            for a2 in 0..8 {
                let p = m.pair_prob(a1, a2, s).unwrap();
                let expected = if a1 == a2 {
                    0.25 * binw * binw + 0.75 * binw
                } else {
                    0.25 * binw * binw
                };
                assert!((p - expected).abs() < 1e-15, "({a1},{a2}): {p} vs {expected}");
            }
        }
    }

    #[test]
    fn pair_prob_independent_when_q0_one() {
        let m = MarkovModel::new(1.0, vec![], Density::Uniform).unwrap();
        let s = spec(2);
        for a1 in 0..4 {
            for a2 in 0..4 {
                let p = m.pair_prob(a1, a2, s).unwrap();
                assert!((p - 0.0625).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn pair_prob_rows_marginalize() {
        let m = MarkovModel::new(
            0.3,
            vec![(BranchFn::Affine { a: 0.5, c: 0.1 }, 0.7)],
            Density::Uniform,
        )
        .unwrap();
        let s = spec(4);
        for a1 in 0..16 {
            let row: f64 = (0..16).map(|a2| m.pair_prob(a1, a2, s).unwrap()).sum();
            let (lo, hi) = s.bin_interval(a1).unwrap();
            let mu = m.marginal_mass(lo, hi);
            assert!((row - mu).abs() < 1e-9, "a1={a1} row={row} mu={mu}");
        }
    }

    #[test]
    fn markov_monte_carlo_matches_pair_probs() {
        // independent length-2 paths give i.i.d. pair draws (the chain
        // starts at its uniform stationary law), so multinomial standard
        // errors apply; overlapping windows of one long path would not be
        // independent and would need wider bands
        let m = MarkovModel::piecewise_constant(0.2).unwrap();
        let s = spec(4);
        let pairs = 1_000_000usize;
        let mut counts = vec![0u64; 256];
        for t in 0..pairs {
            let (xs, _) = m.sample(2, crate::rng::derive_seed(55, t as u64));
            let a1 = s.quantize(xs[0]).unwrap() as usize;
            let a2 = s.quantize(xs[1]).unwrap() as usize;
            counts[a1 * 16 + a2] += 1;
        }
        let n = pairs as f64;
        for a1 in 0..16u32 {
            for a2 in 0..16u32 {
                let p = m.pair_prob(a1, a2, s).unwrap();
                let emp = counts[(a1 * 16 + a2) as usize] as f64 / n;
                let se = (p * (1.0 - p) / n).sqrt();
                assert!(
                    (emp - p).abs() <= 3.0 * se + 2e-6,
                    "({a1},{a2}) emp={emp} p={p}"
                );
            }
        }
    }

    #[test]
    fn estimated_marginal_integrates_to_one() {
        let m = MarkovModel::new(
            0.5,
            vec![(BranchFn::Affine { a: 0.5, c: 0.25 }, 0.5)],
            Density::Uniform,
        )
        .unwrap();
        assert!(!m.has_uniform_marginal());
        let total = m.marginal_mass(0.0, 1.0);
        assert!((total - 1.0).abs() < 1e-12);
        let half = m.marginal_mass(0.0, 0.5) + m.marginal_mass(0.5, 1.0);
        assert!((half - 1.0).abs() < 1e-12);
    }

    #[test]
    fn iid_weight_table_sparse_for_uniform_slab() {
        let m = SpikeSlabModel::single_atom(0.3, 0.5).unwrap();
        let s = spec(12);
        let t = m.weights(s).unwrap();
        assert_eq!(t.stored_len(), 1);
        let atom_bin = s.quantize(0.5).unwrap();
        let expected_atom = -(0.7 + 0.3 * s.bin_width()).log2();
        assert!((t.weight_of(&[atom_bin]) - expected_atom).abs() < 1e-12);
        let expected_off = -(0.3 * s.bin_width()).log2();
        assert!((t.default_weight() - expected_off).abs() < 1e-12);
    }

    #[test]
    fn markov_weight_table_example2() {
        let m = MarkovModel::piecewise_constant(0.1).unwrap();
        let s = spec(8);
        let t = m.weights(s).unwrap();
        assert_eq!(t.stored_len(), 256); // the diagonal
        let binw = s.bin_width();
        let diag = -(0.1 * binw * binw + 0.9 * binw).log2();
        let off = -(0.1f64 * binw * binw).log2();
        assert!((t.weight_of(&[7, 7]) - diag).abs() < 1e-12);
        assert!((t.weight_of(&[7, 9]) - off).abs() < 1e-12);
        assert!((t.default_weight() - off).abs() < 1e-12);
    }

    #[test]
    fn model_files_parse() {
        let kv = crate::config::KvFile::parse(
            "kind = iid\nq0 = 0.3\ndensity = uniform\natom = 0.5 0.7\n",
        )
        .unwrap();
        let m = SourceSpec::from_kv(&kv).unwrap().as_iid().unwrap().clone();
        assert_eq!(m.q0(), 0.3);
        assert_eq!(m.atoms(), &[(0.5, 0.7)]);

        let kv = crate::config::KvFile::parse(
            "kind = markov\nq0 = 0.1\nbranch = identity 0.9\nlipschitz = 1\n",
        )
        .unwrap();
        let m = SourceSpec::from_kv(&kv).unwrap().as_markov().unwrap().clone();
        assert_eq!(m.q0(), 0.1);
        assert!(m.has_uniform_marginal());

        let kv = crate::config::KvFile::parse(
            "kind = markov\nq0 = 0.4\ndensity = parabolic\nbranch = affine 0.5 0.25 0.3\nbranch = tabulated 0.3 0 0.1 0.5 0.8 1 0.2\n",
        )
        .unwrap();
        let m = SourceSpec::from_kv(&kv).unwrap().as_markov().unwrap().clone();
        assert_eq!(m.branches().len(), 2);
        assert_eq!(m.density(), Density::Parabolic);
        assert!((m.lipschitz() - 1.4).abs() < 1e-12); // steepest tabulated segment

        let bad = crate::config::KvFile::parse("kind = iid\nq0 = 0.3\natom = 0.5\n").unwrap();
        assert!(SourceSpec::from_kv(&bad).is_err());
        let bad = crate::config::KvFile::parse(
            "kind = markov\nq0 = 0.1\nbranch = identity 0.9\nlipschitz = 0.5\n",
        )
        .unwrap();
        assert!(SourceSpec::from_kv(&bad).is_err());
    }

    #[test]
    fn branch_validation() {
        assert!(BranchFn::Affine { a: 0.5, c: 0.6 }.validate().is_err());
        assert!(BranchFn::Affine { a: 0.5, c: 0.25 }.validate().is_ok());
        assert!(BranchFn::Tabulated { xs: vec![0.0, 1.0], ys: vec![0.2, 0.8] }
            .validate()
            .is_ok());
        assert!(BranchFn::Tabulated { xs: vec![0.0, 0.0], ys: vec![0.2, 0.8] }
            .validate()
            .is_err());
        let f = BranchFn::Tabulated { xs: vec![0.0, 0.5, 1.0], ys: vec![0.0, 0.9, 0.1] };
        assert!((f.lipschitz() - 1.8) < 1e-12);
        assert!((f.eval(0.25) - 0.45).abs() < 1e-12);
    }
}
