//! Block keys, empirical block distributions, and weight tables.
//!
//! A weight table summarizes a source distribution at quantizer resolution:
//! each stored block of bin indices carries `w = -log2 P(block)` (bits), and
//! every absent block falls back to a single default weight. The denoisers
//! score a candidate sequence by sliding a length-`m` window over it and
//! summing the weights of the quantized windows.

use std::borrow::Borrow;
use std::collections::BTreeMap;

use crate::error::{QmapError, Result};
use crate::quant::QuantSpec;

/// A block of bin indices (the quantized content of one window).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct BlockKey(Vec<u32>);

impl BlockKey {
    pub fn new(bins: Vec<u32>) -> Self {
        assert!(!bins.is_empty(), "block keys have length >= 1");
        Self(bins)
    }

    pub fn single(bin: u32) -> Self {
        Self(vec![bin])
    }

    pub fn pair(a1: u32, a2: u32) -> Self {
        Self(vec![a1, a2])
    }

    pub fn bins(&self) -> &[u32] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

impl Borrow<[u32]> for BlockKey {
    fn borrow(&self) -> &[u32] {
        &self.0
    }
}

/// Sliding-window empirical distribution of quantized blocks.
///
/// Frequencies over the `n - m + 1` windows of `u`, quantized bin-wise.
pub fn empirical_block_dist(
    u: &[f64],
    m: usize,
    spec: QuantSpec,
) -> Result<BTreeMap<BlockKey, f64>> {
    if m == 0 || u.len() < m {
        return Err(QmapError::SequenceTooShort { len: u.len(), block: m });
    }
    let bins: Vec<u32> = u.iter().map(|&x| spec.quantize(x)).collect::<Result<_>>()?;
    let windows = bins.len() - m + 1;
    let mut counts: BTreeMap<BlockKey, u64> = BTreeMap::new();
    for w in bins.windows(m) {
        *counts.entry(BlockKey::new(w.to_vec())).or_insert(0) += 1;
    }
    let norm = windows as f64;
    Ok(counts
        .into_iter()
        .map(|(k, c)| (k, c as f64 / norm))
        .collect())
}

/// Sparse map from quantized blocks to weights in bits.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightTable {
    bits: u32,
    block_len: usize,
    entries: BTreeMap<BlockKey, f64>,
    default_weight: f64,
}

impl WeightTable {
    /// Build a table from block probabilities: stored weights are
    /// `-log2 p(block)`, absent blocks get `-log2 default_mass`.
    ///
    /// Probabilities must be positive, sum to at most 1 (small slack for
    /// rounding), and the default mass may not exceed any stored mass, so
    /// the default weight dominates every stored weight.
    pub fn from_dist(
        dist: &BTreeMap<BlockKey, f64>,
        default_mass: f64,
        spec: QuantSpec,
    ) -> Result<Self> {
        if dist.is_empty() {
            return Err(QmapError::BadModel("weight table needs at least one block".into()));
        }
        if !(default_mass > 0.0) {
            return Err(QmapError::NonPositiveProbability(default_mass));
        }
        let block_len = dist.keys().next().unwrap().len();
        let mut sum = 0.0;
        let mut min_p = f64::INFINITY;
        for (key, &p) in dist {
            if key.len() != block_len {
                return Err(QmapError::BadModel(format!(
                    "mixed block lengths: {} and {}",
                    block_len,
                    key.len()
                )));
            }
            for &b in key.bins() {
                spec.check_bin(b)?;
            }
            if !(p > 0.0) {
                return Err(QmapError::NonPositiveProbability(p));
            }
            sum += p;
            min_p = min_p.min(p);
        }
        if sum > 1.0 + 1e-9 {
            return Err(QmapError::MassExceedsOne(sum));
        }
        if default_mass > min_p * (1.0 + 1e-12) {
            return Err(QmapError::BadModel(format!(
                "default mass {default_mass} exceeds smallest stored mass {min_p}"
            )));
        }
        let entries = dist
            .iter()
            .map(|(k, &p)| (k.clone(), -p.log2()))
            .collect();
        Ok(Self {
            bits: spec.bits(),
            block_len,
            entries,
            default_weight: -default_mass.log2(),
        })
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    pub fn spec(&self) -> QuantSpec {
        QuantSpec::new(self.bits).expect("validated at construction")
    }

    pub fn block_len(&self) -> usize {
        self.block_len
    }

    pub fn default_weight(&self) -> f64 {
        self.default_weight
    }

    pub fn stored_len(&self) -> usize {
        self.entries.len()
    }

    pub fn entries(&self) -> impl Iterator<Item = (&BlockKey, f64)> {
        self.entries.iter().map(|(k, &w)| (k, w))
    }

    /// Weight of a block, falling back to the default for absent keys.
    pub fn weight_of(&self, bins: &[u32]) -> f64 {
        debug_assert_eq!(bins.len(), self.block_len);
        self.entries.get(bins).copied().unwrap_or(self.default_weight)
    }

    pub fn is_stored(&self, bins: &[u32]) -> bool {
        self.entries.contains_key(bins)
    }

    pub fn check_block_len(&self, expected: usize) -> Result<()> {
        if self.block_len == expected {
            Ok(())
        } else {
            Err(QmapError::WrongBlockLen { got: self.block_len, expected })
        }
    }

    /// Serialize as line-oriented text:
    /// a `b=<bits> m=<len> default=<weight>` header, then one
    /// `a_1 ... a_m <weight>` record per stored block.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "b={} m={} default={}\n",
            self.bits, self.block_len, self.default_weight
        ));
        for (key, w) in self.entries() {
            for b in key.bins() {
                out.push_str(&format!("{b} "));
            }
            out.push_str(&format!("{w}\n"));
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| QmapError::Parse("empty weight table".into()))?;
        let mut bits = None;
        let mut m = None;
        let mut default = None;
        for tok in header.split_whitespace() {
            let (k, v) = tok
                .split_once('=')
                .ok_or_else(|| QmapError::Parse(format!("bad header token `{tok}`")))?;
            match k {
                "b" => bits = Some(v.parse::<u32>().map_err(|_| QmapError::Parse(format!("bad bits `{v}`")))?),
                "m" => m = Some(v.parse::<usize>().map_err(|_| QmapError::Parse(format!("bad m `{v}`")))?),
                "default" => default = Some(v.parse::<f64>().map_err(|_| QmapError::Parse(format!("bad default `{v}`")))?),
                _ => return Err(QmapError::Parse(format!("unknown header key `{k}`"))),
            }
        }
        let (bits, block_len, default_weight) = match (bits, m, default) {
            (Some(b), Some(m), Some(d)) => (b, m, d),
            _ => return Err(QmapError::Parse("weight table header needs b=, m=, default=".into())),
        };
        let spec = QuantSpec::new(bits)?;
        let mut entries = BTreeMap::new();
        for (lineno, line) in lines.enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let toks: Vec<&str> = line.split_whitespace().collect();
            if toks.len() != block_len + 1 {
                return Err(QmapError::Parse(format!(
                    "record {}: expected {} bins + weight",
                    lineno + 2,
                    block_len
                )));
            }
            let bins: Vec<u32> = toks[..block_len]
                .iter()
                .map(|t| t.parse().map_err(|_| QmapError::Parse(format!("bad bin `{t}`"))))
                .collect::<Result<_>>()?;
            for &b in &bins {
                spec.check_bin(b)?;
            }
            let w: f64 = toks[block_len]
                .parse()
                .map_err(|_| QmapError::Parse(format!("bad weight `{}`", toks[block_len])))?;
            if !(w >= 0.0) {
                return Err(QmapError::Parse(format!("negative weight {w}")));
            }
            entries.insert(BlockKey::new(bins), w);
        }
        Ok(Self { bits, block_len, entries, default_weight })
    }
}

/// Spec-named constructor alias: weights from a block distribution.
pub fn weights_from_dist(
    dist: &BTreeMap<BlockKey, f64>,
    default_mass: f64,
    spec: QuantSpec,
) -> Result<WeightTable> {
    WeightTable::from_dist(dist, default_mass, spec)
}

/// Sliding-window cost: the sum of window weights over `u`.
///
/// Equals `(n - m + 1)` times the inner product of the empirical block
/// distribution of `u` with the weight map.
pub fn block_cost(u: &[f64], table: &WeightTable) -> Result<f64> {
    let m = table.block_len;
    if u.len() < m {
        return Err(QmapError::SequenceTooShort { len: u.len(), block: m });
    }
    let spec = table.spec();
    let bins: Vec<u32> = u.iter().map(|&x| spec.quantize(x)).collect::<Result<_>>()?;
    Ok(bins.windows(m).map(|w| table.weight_of(w)).sum())
}

/// Per-block regularizer `r_b(block) = w(block) / bits`: about 1 on
/// unstructured blocks and O(1/b) on structured ones.
pub fn normalized_regularizer(block: &[f64], table: &WeightTable) -> Result<f64> {
    if block.len() != table.block_len {
        return Err(QmapError::WrongBlockLen { got: block.len(), expected: table.block_len });
    }
    let spec = table.spec();
    let bins: Vec<u32> = block.iter().map(|&x| spec.quantize(x)).collect::<Result<_>>()?;
    Ok(table.weight_of(&bins) / table.bits as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn spec(bits: u32) -> QuantSpec {
        QuantSpec::new(bits).unwrap()
    }

    #[test]
    fn empirical_dist_constant_sequence() {
        let d = empirical_block_dist(&[0.1, 0.1, 0.1], 1, spec(1)).unwrap();
        assert_eq!(d.len(), 1);
        assert_eq!(d[&BlockKey::single(0)], 1.0);
    }

    #[test]
    fn empirical_dist_two_windows() {
        let d = empirical_block_dist(&[0.1, 0.6, 0.1], 2, spec(1)).unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!(d[&BlockKey::pair(0, 1)], 0.5);
        assert_eq!(d[&BlockKey::pair(1, 0)], 0.5);
    }

    #[test]
    fn empirical_dist_normalizes() {
        let mut rng = crate::rng::rng_from_seed(3);
        let u: Vec<f64> = (0..10_000).map(|_| rng.gen()).collect();
        for (m, bits) in [(1, 3), (2, 4), (3, 2)] {
            let d = empirical_block_dist(&u, m, spec(bits)).unwrap();
            let total: f64 = d.values().sum();
            assert!((total - 1.0).abs() < 1e-12, "m={m} total={total}");
        }
    }

    #[test]
    fn empirical_dist_rejects_short_input() {
        assert!(empirical_block_dist(&[0.1], 2, spec(1)).is_err());
    }

    #[test]
    fn weights_from_dist_examples() {
        let mut d = BTreeMap::new();
        d.insert(BlockKey::single(0), 0.5);
        d.insert(BlockKey::single(1), 0.5);
        let t = weights_from_dist(&d, 0.25, spec(1)).unwrap();
        assert_eq!(t.weight_of(&[0]), 1.0);
        assert_eq!(t.weight_of(&[1]), 1.0);

        // spike-slab bin mass: atom 0.7 plus 0.3/16 of continuous mass
        let mut d = BTreeMap::new();
        d.insert(BlockKey::single(0), 0.7 + 0.3 / 16.0);
        let t = weights_from_dist(&d, 0.3 / 16.0, spec(4)).unwrap();
        let expected = -(0.71875f64).log2();
        assert!((t.weight_of(&[0]) - expected).abs() < 1e-12);
        assert!((expected - 0.476438).abs() < 1e-6);

        let mut d = BTreeMap::new();
        d.insert(BlockKey::single(2), 0.5);
        let t = weights_from_dist(&d, (2.0f64).powi(-20), spec(4)).unwrap();
        assert_eq!(t.default_weight(), 20.0);
        assert_eq!(t.weight_of(&[9]), 20.0);
    }

    #[test]
    fn weights_from_dist_rejects_bad_input() {
        let mut d = BTreeMap::new();
        d.insert(BlockKey::single(0), 0.0);
        assert!(weights_from_dist(&d, 0.1, spec(2)).is_err());

        let mut d = BTreeMap::new();
        d.insert(BlockKey::single(0), 0.8);
        d.insert(BlockKey::single(1), 0.5);
        assert!(matches!(
            weights_from_dist(&d, 0.1, spec(2)),
            Err(QmapError::MassExceedsOne(_))
        ));

        // default mass above a stored mass breaks the dominance invariant
        let mut d = BTreeMap::new();
        d.insert(BlockKey::single(0), 0.01);
        assert!(weights_from_dist(&d, 0.5, spec(2)).is_err());
    }

    #[test]
    fn block_cost_constant_sequence() {
        let mut d = BTreeMap::new();
        d.insert(BlockKey::pair(0, 0), 0.25);
        let t = weights_from_dist(&d, 0.25, spec(1)).unwrap();
        // two windows, each weighing -log2(0.25) = 2
        let c = block_cost(&[0.1, 0.1, 0.1], &t).unwrap();
        assert_eq!(c, 4.0);
    }

    #[test]
    fn block_cost_matches_inner_product() {
        let mut rng = crate::rng::rng_from_seed(17);
        for _ in 0..20 {
            let n = rng.gen_range(5..60);
            let u: Vec<f64> = (0..n).map(|_| rng.gen()).collect();
            let s = spec(3);
            let m = rng.gen_range(1..=2usize);
            // random sparse table over observed blocks plus a default
            let emp = empirical_block_dist(&u, m, s).unwrap();
            let mut keep: BTreeMap<BlockKey, f64> = BTreeMap::new();
            for k in emp.keys() {
                if rng.gen_bool(0.7) {
                    keep.insert(k.clone(), rng.gen_range(0.001..0.01));
                }
            }
            if keep.is_empty() {
                continue;
            }
            let t = weights_from_dist(&keep, 1e-4, s).unwrap();
            let direct = block_cost(&u, &t).unwrap();
            let windows = (n - m + 1) as f64;
            let ip: f64 = emp.iter().map(|(k, &f)| f * t.weight_of(k.bins())).sum();
            assert!((direct - windows * ip).abs() < 1e-9 * direct.max(1.0));
        }
    }

    #[test]
    fn normalized_regularizer_uniform_source() {
        // uniform continuous source: every bin has mass 2^-8, so r_b = 1
        let s = spec(8);
        let mut d = BTreeMap::new();
        for a in 0..256u32 {
            d.insert(BlockKey::single(a), (2.0f64).powi(-8));
        }
        let t = weights_from_dist(&d, (2.0f64).powi(-8), s).unwrap();
        assert_eq!(normalized_regularizer(&[0.3], &t).unwrap(), 1.0);
    }

    #[test]
    fn normalized_regularizer_spike_slab() {
        // q0 = 0.4 uniform slab, atom 0.5 with mass 0.6, b = 8
        let s = spec(8);
        let atom_mass = 0.6 + 0.4 / 256.0;
        let off_mass = 0.4 / 256.0;
        let mut d = BTreeMap::new();
        d.insert(BlockKey::single(128), atom_mass);
        let t = weights_from_dist(&d, off_mass, s).unwrap();

        let r_atom = normalized_regularizer(&[0.5], &t).unwrap();
        let bound = (1.0f64 / 0.6).log2() / 8.0;
        assert!(r_atom <= bound, "r={r_atom} bound={bound}");
        assert!((r_atom - 0.0921).abs() < 2e-3);

        let r_off = normalized_regularizer(&[0.3], &t).unwrap();
        let expected = 1.0 + (1.0f64 / 0.4).log2() / 8.0;
        assert!((r_off - expected).abs() < 1e-12);
        assert!((r_off - 1.165).abs() < 1e-3);
    }

    #[test]
    fn text_round_trip() {
        let mut d = BTreeMap::new();
        d.insert(BlockKey::pair(0, 0), 0.35);
        d.insert(BlockKey::pair(1, 3), 0.0123456789);
        d.insert(BlockKey::pair(3, 2), 1e-7);
        let t = weights_from_dist(&d, 1e-9, spec(2)).unwrap();
        let text = t.to_text();
        let back = WeightTable::from_text(&text).unwrap();
        assert_eq!(back.bits(), t.bits());
        assert_eq!(back.block_len(), t.block_len());
        for (k, w) in t.entries() {
            let wr = back.weight_of(k.bins());
            assert!(((wr - w) / w).abs() < 1e-12);
        }
        assert!(((back.default_weight() - t.default_weight()) / t.default_weight()).abs() < 1e-12);
    }

    #[test]
    fn from_text_rejects_garbage() {
        assert!(WeightTable::from_text("").is_err());
        assert!(WeightTable::from_text("b=2 m=1\n").is_err());
        assert!(WeightTable::from_text("b=2 m=1 default=5\n7 1.0\n").is_err());
        assert!(WeightTable::from_text("b=2 m=2 default=5\n1 1.0\n").is_err());
    }
}
