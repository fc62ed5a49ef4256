//! Learned codeword prior: patch sampling, counting, add-one smoothing,
//! and the versioned prior file.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::Rng as _;
use rayon::prelude::*;

use super::codec::{build_breakpoints, Breakpoints, CodewordLayout, PatchCodec, CODEWORD_SPACE};
use super::{haar, GrayImage};
use crate::error::{QmapError, Result};
use crate::rng::{derive_seed, rng_from_seed};

/// Sparse codeword counts with add-one smoothing: a codeword with count `c`
/// has probability `(c + 1) / (total + N)` where `N = 2^28`, so unseen
/// codewords share a positive floor and everything sums to 1.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchPrior {
    counts: HashMap<u32, u64>,
    total: u64,
    /// Stored codewords sorted by decreasing count (ties: ascending code).
    ranked: Vec<(u32, u64)>,
    log2_denom: f64,
}

impl PatchPrior {
    pub fn from_counts(counts: HashMap<u32, u64>) -> Result<Self> {
        if counts.is_empty() {
            return Err(QmapError::EmptyCorpus("no codeword counts".into()));
        }
        let total: u64 = counts.values().sum();
        let mut ranked: Vec<(u32, u64)> = counts.iter().map(|(&k, &c)| (k, c)).collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        let log2_denom = ((total + CODEWORD_SPACE) as f64).log2();
        Ok(Self { counts, total, ranked, log2_denom })
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn stored_len(&self) -> usize {
        self.counts.len()
    }

    pub fn count(&self, codeword: u32) -> u64 {
        self.counts.get(&codeword).copied().unwrap_or(0)
    }

    pub fn is_stored(&self, codeword: u32) -> bool {
        self.counts.contains_key(&codeword)
    }

    /// Smoothed probability of a codeword.
    pub fn probability(&self, codeword: u32) -> f64 {
        (self.count(codeword) + 1) as f64 / (self.total + CODEWORD_SPACE) as f64
    }

    /// `-log2` of the smoothed probability.
    pub fn weight_bits(&self, codeword: u32) -> f64 {
        self.log2_denom - ((self.count(codeword) + 1) as f64).log2()
    }

    /// Probability floor shared by every unseen codeword.
    pub fn floor_probability(&self) -> f64 {
        1.0 / (self.total + CODEWORD_SPACE) as f64
    }

    pub fn floor_weight_bits(&self) -> f64 {
        self.log2_denom
    }

    /// Stored codewords by decreasing probability.
    pub fn ranked(&self) -> &[(u32, u64)] {
        &self.ranked
    }

    /// Total smoothed mass (stored plus the unseen floor); equals 1.
    pub fn total_smoothed_mass(&self) -> f64 {
        let stored: f64 = self
            .ranked
            .iter()
            .map(|&(k, _)| self.probability(k))
            .sum();
        let unseen = (CODEWORD_SPACE - self.counts.len() as u64) as f64 * self.floor_probability();
        stored + unseen
    }

    /// Cumulative share of raw training mass held by the top `fraction` of
    /// stored codewords.
    pub fn top_fraction_mass(&self, fraction: f64) -> f64 {
        let k = ((self.ranked.len() as f64 * fraction).ceil() as usize).max(1);
        let top: u64 = self.ranked.iter().take(k).map(|&(_, c)| c).sum();
        top as f64 / self.total as f64
    }

    pub fn rank_summary(&self) -> RankSummary {
        RankSummary {
            stored: self.ranked.len(),
            total: self.total,
            top_probabilities: self
                .ranked
                .iter()
                .take(8)
                .map(|&(k, c)| (k, c as f64 / self.total as f64))
                .collect(),
            top_1pct_mass: self.top_fraction_mass(0.01),
            top_5pct_mass: self.top_fraction_mass(0.05),
            top_10pct_mass: self.top_fraction_mass(0.10),
        }
    }
}

/// Rank-probability digest of a trained prior.
#[derive(Debug, Clone)]
pub struct RankSummary {
    pub stored: usize,
    pub total: u64,
    pub top_probabilities: Vec<(u32, f64)>,
    pub top_1pct_mass: f64,
    pub top_5pct_mass: f64,
    pub top_10pct_mass: f64,
}

impl std::fmt::Display for RankSummary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "stored codewords: {} (from {} patches)", self.stored, self.total)?;
        writeln!(f, "top stored codewords (rank, code, share):")?;
        for (rank, (code, p)) in self.top_probabilities.iter().enumerate() {
            writeln!(f, "  {:>2}  {:08x}  {:.4}", rank + 1, code, p)?;
        }
        writeln!(f, "top  1% of stored codewords hold {:.1}% of training mass", 100.0 * self.top_1pct_mass)?;
        writeln!(f, "top  5% of stored codewords hold {:.1}% of training mass", 100.0 * self.top_5pct_mass)?;
        write!(f, "top 10% of stored codewords hold {:.1}% of training mass", 100.0 * self.top_10pct_mass)
    }
}

/// A trained quantizer and codeword prior.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedPrior {
    pub codec: PatchCodec,
    pub prior: PatchPrior,
}

/// Learn breakpoints and a codeword prior from a corpus.
///
/// Samples `patches_per_image` uniformly random 4x4 patches from each image
/// (deterministic per seed), builds equal-mass breakpoints from their
/// transform coefficients, then encodes the same patches into counts.
pub fn train_prior(
    corpus: &[GrayImage],
    patches_per_image: usize,
    seed: u64,
) -> Result<TrainedPrior> {
    if corpus.is_empty() {
        return Err(QmapError::EmptyCorpus("training corpus is empty".into()));
    }
    if patches_per_image == 0 {
        return Err(QmapError::InsufficientSamples { needed: 1, got: 0 });
    }
    let layout = CodewordLayout::standard();

    // phase 1: sample patches and collect transform coefficients
    let per_image: Vec<Vec<[f64; 16]>> = corpus
        .par_iter()
        .enumerate()
        .map(|(idx, img)| {
            let mut rng = rng_from_seed(derive_seed(seed, idx as u64));
            (0..patches_per_image)
                .map(|_| {
                    let x = rng.gen_range(0..=img.width() - 4);
                    let y = rng.gen_range(0..=img.height() - 4);
                    haar::forward(&img.patch_at(x, y))
                })
                .collect()
        })
        .collect();

    let mut coeff_samples: Vec<Vec<f64>> = vec![Vec::new(); layout.num_quantized()];
    for coeffs in per_image.iter().flatten() {
        for (k, slot) in layout.slots().iter().enumerate() {
            coeff_samples[k].push(coeffs[slot.pos]);
        }
    }
    let breakpoints = build_breakpoints(&coeff_samples, &layout)?;
    let codec = PatchCodec::new(layout, breakpoints);

    // phase 2: encode the sampled patches into counts (associative merge)
    let counts = per_image
        .par_iter()
        .map(|coeff_list| {
            let mut local: HashMap<u32, u64> = HashMap::new();
            for coeffs in coeff_list {
                *local.entry(codec.encode_coeffs(coeffs)).or_insert(0) += 1;
            }
            local
        })
        .reduce(HashMap::new, |mut a, b| {
            for (k, c) in b {
                *a.entry(k).or_insert(0) += c;
            }
            a
        });

    Ok(TrainedPrior { codec, prior: PatchPrior::from_counts(counts)? })
}

const PRIOR_MAGIC: &str = "qmap-prior v1";

impl TrainedPrior {
    /// Versioned text format: layout bits, full-precision breakpoints,
    /// then sparse `codeword count` records.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(f, "{PRIOR_MAGIC}")?;
        let bits: Vec<String> = self
            .codec
            .layout()
            .bits_per_slot()
            .iter()
            .map(|b| b.to_string())
            .collect();
        writeln!(f, "bits {}", bits.join(" "))?;
        writeln!(f, "total {}", self.prior.total())?;
        for (k, bps) in self.codec.breakpoints().per_slot().iter().enumerate() {
            write!(f, "breakpoints {k}")?;
            for b in bps {
                write!(f, " {b}")?;
            }
            writeln!(f)?;
        }
        writeln!(f, "counts {}", self.prior.stored_len())?;
        for &(code, count) in self.prior.ranked() {
            writeln!(f, "{code} {count}")?;
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let f = BufReader::new(std::fs::File::open(path)?);
        let mut lines = f.lines();
        let magic = lines
            .next()
            .transpose()?
            .ok_or_else(|| QmapError::Parse("empty prior file".into()))?;
        if magic.trim() != PRIOR_MAGIC {
            return Err(QmapError::Parse(format!("bad prior magic `{}`", magic.trim())));
        }
        let layout = CodewordLayout::standard();
        let bits_line = lines
            .next()
            .transpose()?
            .ok_or_else(|| QmapError::Parse("missing bits line".into()))?;
        let declared: Vec<u32> = bits_line
            .strip_prefix("bits ")
            .ok_or_else(|| QmapError::Parse("missing bits line".into()))?
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| QmapError::Parse(format!("bad bits `{t}`"))))
            .collect::<Result<_>>()?;
        if declared != layout.bits_per_slot() {
            return Err(QmapError::Parse("prior layout does not match this build".into()));
        }
        let total_line = lines
            .next()
            .transpose()?
            .ok_or_else(|| QmapError::Parse("missing total line".into()))?;
        let _total: u64 = total_line
            .strip_prefix("total ")
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| QmapError::Parse("bad total line".into()))?;

        let mut per_slot: Vec<Vec<f64>> = vec![Vec::new(); layout.num_quantized()];
        for _ in 0..layout.num_quantized() {
            let line = lines
                .next()
                .transpose()?
                .ok_or_else(|| QmapError::Parse("missing breakpoints line".into()))?;
            let rest = line
                .strip_prefix("breakpoints ")
                .ok_or_else(|| QmapError::Parse(format!("expected breakpoints line, got `{line}`")))?;
            let mut toks = rest.split_whitespace();
            let idx: usize = toks
                .next()
                .and_then(|t| t.parse().ok())
                .ok_or_else(|| QmapError::Parse("bad breakpoints index".into()))?;
            if idx >= per_slot.len() {
                return Err(QmapError::Parse(format!("breakpoints index {idx} out of range")));
            }
            per_slot[idx] = toks
                .map(|t| t.parse().map_err(|_| QmapError::Parse(format!("bad breakpoint `{t}`"))))
                .collect::<Result<_>>()?;
        }
        let breakpoints = Breakpoints::from_raw(per_slot, &layout)?;

        let counts_line = lines
            .next()
            .transpose()?
            .ok_or_else(|| QmapError::Parse("missing counts line".into()))?;
        let n: usize = counts_line
            .strip_prefix("counts ")
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| QmapError::Parse("bad counts line".into()))?;
        let mut counts = HashMap::with_capacity(n);
        for _ in 0..n {
            let line = lines
                .next()
                .transpose()?
                .ok_or_else(|| QmapError::Parse("truncated counts".into()))?;
            let (code, count) = line
                .split_once(' ')
                .ok_or_else(|| QmapError::Parse(format!("bad count record `{line}`")))?;
            let code: u32 = code
                .parse()
                .map_err(|_| QmapError::Parse(format!("bad codeword `{code}`")))?;
            let count: u64 = count
                .trim()
                .parse()
                .map_err(|_| QmapError::Parse(format!("bad count `{count}`")))?;
            counts.insert(code, count);
        }
        Ok(TrainedPrior {
            codec: PatchCodec::new(layout, breakpoints),
            prior: PatchPrior::from_counts(counts)?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::synth::synth_corpus;

    #[test]
    fn constant_corpus_concentrates_then_errors_or_not() {
        // constant images have all-equal coefficients: breakpoints degenerate
        let corpus: Vec<GrayImage> = (0..4).map(|_| GrayImage::from_fn(16, 16, |_, _| 0.5)).collect();
        assert!(matches!(
            train_prior(&corpus, 32, 7),
            Err(QmapError::DegenerateBreakpoints(_))
        ));
    }

    #[test]
    fn smoothed_prior_normalizes() {
        let corpus = synth_corpus(12, 48, 48, 99);
        let trained = train_prior(&corpus, 64, 3).unwrap();
        let mass = trained.prior.total_smoothed_mass();
        assert!((mass - 1.0).abs() < 1e-9, "mass {mass}");
        assert_eq!(trained.prior.total(), 12 * 64);
        // ranked is sorted by decreasing count
        let ranked = trained.prior.ranked();
        assert!(ranked.windows(2).all(|w| w[0].1 >= w[1].1));
    }

    #[test]
    fn training_is_deterministic() {
        let corpus = synth_corpus(6, 40, 40, 1);
        let a = train_prior(&corpus, 32, 5).unwrap();
        let b = train_prior(&corpus, 32, 5).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn prior_file_round_trip() {
        let corpus = synth_corpus(8, 40, 40, 11);
        let trained = train_prior(&corpus, 48, 2).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("prior.txt");
        trained.save(&path).unwrap();
        let back = TrainedPrior::load(&path).unwrap();
        assert_eq!(back.codec, trained.codec);
        assert_eq!(back.prior.total(), trained.prior.total());
        for &(code, _) in trained.prior.ranked() {
            let a = trained.prior.probability(code);
            let b = back.prior.probability(code);
            assert!(((a - b) / a).abs() < 1e-12);
        }
        assert!(TrainedPrior::load(dir.path().join("missing.txt")).is_err());
    }
}
