//! Standard normal distribution helpers that stay finite in the far tails.
//!
//! `log_cdf` and `inv_mills` switch to the asymptotic expansion of the Gaussian
//! tail below [`ASYMPTOTIC_CUTOFF`], where `cdf` itself starts losing relative
//! precision.

use statrs::function::erf::{erfc, erfc_inv};
use std::f64::consts::{FRAC_1_SQRT_2, PI, SQRT_2};

pub const ASYMPTOTIC_CUTOFF: f64 = -8.0;

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

pub fn pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * PI).sqrt()
}

pub fn cdf(z: f64) -> f64 {
    0.5 * erfc(-z * FRAC_1_SQRT_2)
}

/// Sum of the alternating series `1 - 1/z^2 + 3/z^4 - 15/z^6 + ...` truncated
/// at its smallest term. `Φ(z) ≈ φ(z) / (-z) * series` for `z → -∞`.
fn tail_series(z: f64) -> f64 {
    let inv_z2 = 1.0 / (z * z);
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..60 {
        let next = -term * (2 * k - 1) as f64 * inv_z2;
        if next.abs() >= term.abs() || next.abs() < 1e-18 {
            break;
        }
        sum += next;
        term = next;
    }
    sum
}

/// `log Φ(z)` without underflow for very negative `z`.
pub fn log_cdf(z: f64) -> f64 {
    if z < ASYMPTOTIC_CUTOFF {
        -0.5 * z * z - LN_SQRT_2PI - (-z).ln() + tail_series(z).ln()
    } else if z <= 0.0 {
        cdf(z).ln()
    } else {
        (-0.5 * erfc(z * FRAC_1_SQRT_2)).ln_1p()
    }
}

/// Inverse Mills ratio `φ(z) / Φ(z)`.
pub fn inv_mills(z: f64) -> f64 {
    if z < ASYMPTOTIC_CUTOFF {
        -z / tail_series(z)
    } else {
        pdf(z) / cdf(z)
    }
}

/// Quantile function `Φ⁻¹(p)` for `p ∈ (0, 1)`, polished with one Newton step.
pub fn ppf(p: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    let x = -SQRT_2 * erfc_inv(2.0 * p);
    let density = pdf(x);
    if density > 0.0 {
        x - (cdf(x) - p) / density
    } else {
        x
    }
}
