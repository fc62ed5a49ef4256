//! Scalar quantizer over the unit interval.
//!
//! Signals in this crate live on `[0, 1)`. A [`QuantSpec`] with `bits = b`
//! partitions that interval into `2^b` half-open bins of width `2^-b`.
//! Bin boundaries belong to the upper bin, so every `x in [0, 1)` has
//! exactly one bin and atoms sitting on a boundary are unambiguous.

use crate::error::{QmapError, Result};

/// Bit depth of the uniform quantizer on `[0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct QuantSpec {
    bits: u32,
}

impl QuantSpec {
    pub const MAX_BITS: u32 = 32;

    pub fn new(bits: u32) -> Result<Self> {
        if bits == 0 || bits > Self::MAX_BITS {
            return Err(QmapError::BadBits(bits));
        }
        Ok(Self { bits })
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    /// Number of bins, `2^bits`.
    pub fn bin_count(&self) -> u64 {
        1u64 << self.bits
    }

    /// Bin width `2^-bits` (exact).
    pub fn bin_width(&self) -> f64 {
        (2.0f64).powi(-(self.bits as i32))
    }

    /// Map `x in [0, 1)` to its bin index `floor(2^bits * x)`.
    pub fn quantize(&self, x: f64) -> Result<u32> {
        if !(0.0..1.0).contains(&x) {
            return Err(QmapError::OutOfDomain(x));
        }
        Ok((x * self.bin_count() as f64).floor() as u32)
    }

    /// Like [`Self::quantize`] but clamps out-of-range values into the
    /// nearest bin: anything below 0 lands in bin 0, anything at or above 1
    /// lands in the last bin.
    pub fn quantize_clamped(&self, x: f64) -> u32 {
        if !x.is_finite() || x <= 0.0 {
            return 0;
        }
        if x >= 1.0 {
            return (self.bin_count() - 1) as u32;
        }
        (x * self.bin_count() as f64).floor() as u32
    }

    /// Half-open interval `[bin * 2^-b, (bin + 1) * 2^-b)` of a bin.
    pub fn bin_interval(&self, bin: u32) -> Result<(f64, f64)> {
        self.check_bin(bin)?;
        let w = self.bin_width();
        Ok((bin as f64 * w, (bin as f64 + 1.0) * w))
    }

    /// Lower edge of a bin (unchecked).
    pub fn bin_lower(&self, bin: u32) -> f64 {
        bin as f64 * self.bin_width()
    }

    /// Largest representable value strictly inside the bin.
    pub fn bin_upper_inclusive(&self, bin: u32) -> f64 {
        ((bin as f64 + 1.0) * self.bin_width()).next_down()
    }

    /// Value inside `bin` closest to `y`: the fidelity minimizer of
    /// `(y - u)^2` over the half-open bin, attained at the clamp.
    pub fn clamp_to_bin(&self, y: f64, bin: u32) -> f64 {
        let lo = self.bin_lower(bin);
        let hi = self.bin_upper_inclusive(bin);
        if y <= lo {
            lo
        } else if y >= hi {
            hi
        } else {
            y
        }
    }

    pub fn check_bin(&self, bin: u32) -> Result<()> {
        if (bin as u64) < self.bin_count() {
            Ok(())
        } else {
            Err(QmapError::BinOutOfRange { bin, bits: self.bits })
        }
    }
}
