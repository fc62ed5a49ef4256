//! Variable-rate patch quantizer in the Haar domain.
//!
//! Coefficients of total frequency 1 get 4 bits, frequency 2 gets 3,
//! frequency 3 gets 2, frequency 4 gets 1; the DC and frequencies >= 5 pass
//! through unquantized. That packs to 28 bits, a codeword space of 2^28.
//! Cell breakpoints per coefficient come from empirical training quantiles.

use super::haar;
use crate::error::{QmapError, Result};

/// Total codeword bits of the standard layout.
pub const CODEWORD_BITS: u32 = 28;
/// Size of the codeword space.
pub const CODEWORD_SPACE: u64 = 1 << CODEWORD_BITS;

/// One quantized coefficient slot in the packed codeword.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CoeffSlot {
    /// Row-major position on the 4x4 coefficient grid.
    pub pos: usize,
    /// Cell-index bits for this coefficient.
    pub bits: u32,
    /// Left shift of this coefficient's cells in the codeword
    /// (most-significant bits = first quantized coefficient, row-major).
    pub shift: u32,
}

/// Per-coefficient bit allocation over the 4x4 grid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CodewordLayout {
    slots: Vec<CoeffSlot>,
}

/// Bits assigned to a coefficient of total frequency `i + j`.
pub fn bits_for_frequency(freq: usize) -> u32 {
    match freq {
        1 => 4,
        2 => 3,
        3 => 2,
        4 => 1,
        _ => 0,
    }
}

impl CodewordLayout {
    pub fn standard() -> Self {
        let mut slots = Vec::new();
        let mut used = 0u32;
        for i in 0..4 {
            for j in 0..4 {
                let bits = bits_for_frequency(i + j);
                if bits > 0 {
                    slots.push(CoeffSlot { pos: i * 4 + j, bits, shift: 0 });
                    used += bits;
                }
            }
        }
        debug_assert_eq!(used, CODEWORD_BITS);
        let mut consumed = 0;
        for slot in &mut slots {
            consumed += slot.bits;
            slot.shift = CODEWORD_BITS - consumed;
        }
        Self { slots }
    }

    pub fn slots(&self) -> &[CoeffSlot] {
        &self.slots
    }

    pub fn num_quantized(&self) -> usize {
        self.slots.len()
    }

    pub fn bits_per_slot(&self) -> Vec<u32> {
        self.slots.iter().map(|s| s.bits).collect()
    }
}

/// Strictly increasing cell thresholds for each quantized coefficient.
#[derive(Debug, Clone, PartialEq)]
pub struct Breakpoints {
    per_slot: Vec<Vec<f64>>,
}

impl Breakpoints {
    pub fn per_slot(&self) -> &[Vec<f64>] {
        &self.per_slot
    }

    pub fn from_raw(per_slot: Vec<Vec<f64>>, layout: &CodewordLayout) -> Result<Self> {
        if per_slot.len() != layout.num_quantized() {
            return Err(QmapError::DimensionMismatch(format!(
                "{} breakpoint lists for {} quantized coefficients",
                per_slot.len(),
                layout.num_quantized()
            )));
        }
        for (slot, bps) in layout.slots().iter().zip(&per_slot) {
            let cells = 1usize << slot.bits;
            if bps.len() != cells - 1 {
                return Err(QmapError::DegenerateBreakpoints(format!(
                    "slot at {} needs {} breakpoints, got {}",
                    slot.pos,
                    cells - 1,
                    bps.len()
                )));
            }
            if !bps.windows(2).all(|w| w[0] < w[1]) {
                return Err(QmapError::DegenerateBreakpoints(format!(
                    "slot at {} breakpoints not strictly increasing",
                    slot.pos
                )));
            }
        }
        Ok(Self { per_slot })
    }
}

/// Equal-mass empirical breakpoints from per-coefficient training samples.
///
/// `samples[k]` holds training values of the k-th quantized coefficient (in
/// layout order). Ties at quantile positions are nudged upward to keep the
/// thresholds strictly increasing; a coefficient whose samples are all equal
/// is a hard error.
pub fn build_breakpoints(samples: &[Vec<f64>], layout: &CodewordLayout) -> Result<Breakpoints> {
    if samples.len() != layout.num_quantized() {
        return Err(QmapError::DimensionMismatch(format!(
            "{} sample lists for {} quantized coefficients",
            samples.len(),
            layout.num_quantized()
        )));
    }
    let mut per_slot = Vec::with_capacity(samples.len());
    for (slot, values) in layout.slots().iter().zip(samples) {
        let cells = 1usize << slot.bits;
        if values.len() < cells {
            return Err(QmapError::InsufficientSamples { needed: cells, got: values.len() });
        }
        let mut sorted = values.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let n = sorted.len();
        if sorted[0] == sorted[n - 1] {
            return Err(QmapError::DegenerateBreakpoints(format!(
                "all {} samples of the coefficient at position {} are equal",
                n, slot.pos
            )));
        }
        let mut bps: Vec<f64> = (1..cells).map(|k| sorted[k * n / cells]).collect();
        for k in 1..bps.len() {
            if bps[k] <= bps[k - 1] {
                bps[k] = bps[k - 1].next_up();
            }
        }
        per_slot.push(bps);
    }
    Ok(Breakpoints { per_slot })
}

/// Layout plus trained breakpoints: the complete patch quantizer.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchCodec {
    layout: CodewordLayout,
    breakpoints: Breakpoints,
}

impl PatchCodec {
    pub fn new(layout: CodewordLayout, breakpoints: Breakpoints) -> Self {
        Self { layout, breakpoints }
    }

    pub fn layout(&self) -> &CodewordLayout {
        &self.layout
    }

    pub fn breakpoints(&self) -> &Breakpoints {
        &self.breakpoints
    }

    fn cell_of(&self, slot_idx: usize, x: f64) -> u32 {
        let bps = &self.breakpoints.per_slot[slot_idx];
        bps.partition_point(|&b| b <= x) as u32
    }

    /// Half-open cell interval; outer cells extend to +-infinity.
    fn cell_interval(&self, slot_idx: usize, cell: u32) -> (f64, f64) {
        let bps = &self.breakpoints.per_slot[slot_idx];
        let lo = if cell == 0 { f64::NEG_INFINITY } else { bps[cell as usize - 1] };
        let hi = if (cell as usize) == bps.len() { f64::INFINITY } else { bps[cell as usize] };
        (lo, hi)
    }

    /// Codeword of a coefficient block.
    pub fn encode_coeffs(&self, coeffs: &[f64; 16]) -> u32 {
        let mut code = 0u32;
        for (idx, slot) in self.layout.slots.iter().enumerate() {
            code |= self.cell_of(idx, coeffs[slot.pos]) << slot.shift;
        }
        code
    }

    /// Codeword of a pixel patch (transform, then cell lookup).
    pub fn encode_patch(&self, patch: &[f64; 16]) -> u32 {
        self.encode_coeffs(&haar::forward(patch))
    }

    /// Clamp each quantized coefficient into the codeword's cell;
    /// pass-through coefficients stay put. Returns the projected
    /// coefficients and the squared distance moved (equal in the pixel
    /// domain by isometry).
    pub fn project_coeffs(&self, coeffs: &[f64; 16], codeword: u32) -> ([f64; 16], f64) {
        let mut out = *coeffs;
        let mut dist = 0.0;
        for (idx, slot) in self.layout.slots.iter().enumerate() {
            let cell = (codeword >> slot.shift) & ((1 << slot.bits) - 1);
            let (lo, hi) = self.cell_interval(idx, cell);
            let x = coeffs[slot.pos];
            let clamped = if x < lo {
                lo
            } else if x >= hi {
                hi.next_down()
            } else {
                x
            };
            out[slot.pos] = clamped;
            let d = x - clamped;
            dist += d * d;
        }
        (out, dist)
    }

    /// Pixel-domain projection onto the codeword's cell, with distance.
    pub fn project(&self, patch: &[f64; 16], codeword: u32) -> ([f64; 16], f64) {
        let coeffs = haar::forward(patch);
        let (proj, dist) = self.project_coeffs(&coeffs, codeword);
        (haar::inverse(&proj), dist)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::haar;
    use rand::Rng;

    #[test]
    fn standard_layout_packs_28_bits() {
        let layout = CodewordLayout::standard();
        assert_eq!(layout.num_quantized(), 12);
        let total: u32 = layout.slots().iter().map(|s| s.bits).sum();
        assert_eq!(total, 28);
        assert_eq!(layout.bits_per_slot(), vec![4, 3, 2, 4, 3, 2, 1, 3, 2, 1, 2, 1]);
        // first slot owns the most-significant bits
        assert_eq!(layout.slots()[0].shift + layout.slots()[0].bits, 28);
        assert_eq!(layout.slots().last().unwrap().shift, 0);
    }

    fn uniform_samples(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = crate::rng::rng_from_seed(seed);
        (0..n).map(|_| rng.gen()).collect()
    }

    #[test]
    fn quantile_breakpoints_on_uniform() {
        let layout = CodewordLayout::standard();
        let samples: Vec<Vec<f64>> = (0..12).map(|k| uniform_samples(50_000, k as u64)).collect();
        let bp = build_breakpoints(&samples, &layout).unwrap();
        // 1-bit slot: single breakpoint near the median
        let one_bit_idx = layout.slots().iter().position(|s| s.bits == 1).unwrap();
        let b = &bp.per_slot()[one_bit_idx];
        assert_eq!(b.len(), 1);
        assert!((b[0] - 0.5).abs() < 0.01, "median {}", b[0]);
        // 2-bit slot: quartiles
        let two_bit_idx = layout.slots().iter().position(|s| s.bits == 2).unwrap();
        let b = &bp.per_slot()[two_bit_idx];
        assert_eq!(b.len(), 3);
        for (i, q) in [0.25, 0.5, 0.75].iter().enumerate() {
            assert!((b[i] - q).abs() < 0.01, "quartile {i}: {}", b[i]);
        }
    }

    #[test]
    fn degenerate_samples_error_and_ties_nudge() {
        let layout = CodewordLayout::standard();
        let mut samples: Vec<Vec<f64>> = (0..12).map(|k| uniform_samples(4000, 100 + k as u64)).collect();
        samples[3] = vec![0.25; 4000];
        assert!(matches!(
            build_breakpoints(&samples, &layout),
            Err(QmapError::DegenerateBreakpoints(_))
        ));
        // heavy ties at zero still produce strictly increasing thresholds
        let mut tied = uniform_samples(4000, 9);
        for v in tied.iter_mut().take(3000) {
            *v = 0.0;
        }
        samples[3] = tied;
        let bp = build_breakpoints(&samples, &layout).unwrap();
        let b = &bp.per_slot()[3];
        assert!(b.windows(2).all(|w| w[0] < w[1]));
    }

    fn trained_codec(seed: u64) -> PatchCodec {
        let layout = CodewordLayout::standard();
        let samples: Vec<Vec<f64>> = (0..12)
            .map(|k| {
                uniform_samples(20_000, seed + k as u64)
                    .into_iter()
                    .map(|v| v * 2.0 - 1.0)
                    .collect()
            })
            .collect();
        let bp = build_breakpoints(&samples, &layout).unwrap();
        PatchCodec::new(layout, bp)
    }

    #[test]
    fn dc_is_pass_through() {
        let codec = trained_codec(1);
        let mut rng = crate::rng::rng_from_seed(2);
        let mut p = [0.0f64; 16];
        for v in &mut p {
            *v = rng.gen();
        }
        let k1 = codec.encode_patch(&p);
        // shifting DC only: add a constant to every pixel
        let mut q = p;
        for v in &mut q {
            *v += 0.07;
        }
        let k2 = codec.encode_patch(&q);
        assert_eq!(k1, k2);
    }

    #[test]
    fn zero_cells_give_zero_codeword() {
        let codec = trained_codec(3);
        // drive each quantized coefficient far below its lowest breakpoint
        let mut coeffs = [0.0f64; 16];
        for slot in codec.layout().slots() {
            coeffs[slot.pos] = -100.0;
        }
        assert_eq!(codec.encode_coeffs(&coeffs), 0);
    }

    #[test]
    fn projection_fixed_point_and_isometry() {
        let codec = trained_codec(4);
        let mut rng = crate::rng::rng_from_seed(5);
        for _ in 0..500 {
            let mut p = [0.0f64; 16];
            for v in &mut p {
                *v = rng.gen();
            }
            let k: u32 = rng.gen_range(0..1u32 << 28);
            // fixed point in the quantizer's own (coefficient) domain:
            // a boundary clamp re-encodes exactly; the pixel round trip may
            // wobble such a clamp by one ulp, which is transform rounding,
            // not a property of the quantizer
            let coeffs = haar::forward(&p);
            let (proj_coeffs, dist) = codec.project_coeffs(&coeffs, k);
            assert_eq!(codec.encode_coeffs(&proj_coeffs), k, "fixed point");
            let proj = haar::inverse(&proj_coeffs);
            // distance equals pixel-domain distance by isometry
            let pix: f64 = p.iter().zip(&proj).map(|(a, b)| (a - b) * (a - b)).sum();
            assert!((pix - dist).abs() < 1e-10, "pix {pix} vs coeff {dist}");
            // own codeword projects to itself
            let own = codec.encode_patch(&p);
            let (same, d0) = codec.project(&p, own);
            assert_eq!(d0, 0.0);
            let err: f64 = p.iter().zip(&same).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(err < 1e-12);
        }
    }

    #[test]
    fn scalar_clamp_matches_interval_projection() {
        // 1-coefficient view: clamping into [lo, hi) is the interval projection
        let codec = trained_codec(6);
        let slot_idx = 0;
        let bps = codec.breakpoints().per_slot()[slot_idx].clone();
        for x in [-2.0, bps[0] - 1e-9, bps[0], 0.0, bps[14], 2.0] {
            let cell = codec.cell_of(slot_idx, x);
            let (lo, hi) = codec.cell_interval(slot_idx, cell);
            assert!(lo <= x && x < hi);
        }
    }
}
