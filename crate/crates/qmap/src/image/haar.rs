//! Orthonormal two-level Haar transform on 4x4 patches.
//!
//! The 1-D basis stacks the scaling row, the coarse wavelet, and the two
//! fine wavelets; the 2-D transform is its tensor square, giving 16
//! orthonormal basis patches. Row/column index sums act as a total
//! frequency: 1 appears twice, 2 three times, 3 four times, 4 three times.

const H: f64 = 0.5;
const R: f64 = std::f64::consts::FRAC_1_SQRT_2;

/// Rows of the 1-D two-level Haar basis.
const BASIS: [[f64; 4]; 4] = [
    [H, H, H, H],
    [H, H, -H, -H],
    [R, -R, 0.0, 0.0],
    [0.0, 0.0, R, -R],
];

/// Forward transform `C = B * P * B^T` of a row-major 4x4 patch.
pub fn forward(patch: &[f64; 16]) -> [f64; 16] {
    let mut tmp = [0.0f64; 16];
    // rows: tmp = P * B^T  (tmp[k][j] = sum_l P[k][l] * B[j][l])
    for k in 0..4 {
        for j in 0..4 {
            let mut s = 0.0;
            for l in 0..4 {
                s += patch[k * 4 + l] * BASIS[j][l];
            }
            tmp[k * 4 + j] = s;
        }
    }
    let mut out = [0.0f64; 16];
    for i in 0..4 {
        for j in 0..4 {
            let mut s = 0.0;
            for k in 0..4 {
                s += BASIS[i][k] * tmp[k * 4 + j];
            }
            out[i * 4 + j] = s;
        }
    }
    out
}

/// Inverse transform `P = B^T * C * B`.
pub fn inverse(coeffs: &[f64; 16]) -> [f64; 16] {
    let mut tmp = [0.0f64; 16];
    for k in 0..4 {
        for j in 0..4 {
            let mut s = 0.0;
            for l in 0..4 {
                s += coeffs[k * 4 + l] * BASIS[l][j];
            }
            tmp[k * 4 + j] = s;
        }
    }
    let mut out = [0.0f64; 16];
    for i in 0..4 {
        for j in 0..4 {
            let mut s = 0.0;
            for k in 0..4 {
                s += BASIS[k][i] * tmp[k * 4 + j];
            }
            out[i * 4 + j] = s;
        }
    }
    out
}
