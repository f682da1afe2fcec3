//! Standard normal tail helpers. `erfc` comes from `libm` (within a few
//! ulps); the inverse comes from `statrs`.

use libm::erfc;
use statrs::function::erf::erfc_inv;

/// Upper tail `1 - Φ(x)`, accurate for large positive `x`.
#[inline]
pub fn upper(x: f64) -> f64 {
    0.5 * erfc(x / std::f64::consts::SQRT_2)
}

/// `Φ(x)`.
#[inline]
pub fn cdf(x: f64) -> f64 {
    upper(-x)
}

/// Two-sided p-value `2(1 - Φ(|z|))`.
#[inline]
pub fn two_sided_p(z: f64) -> f64 {
    erfc(z.abs() / std::f64::consts::SQRT_2).min(1.0)
}

/// The `z` with `1 - Φ(z) = p`, for `p ∈ (0, 1)`.
pub fn upper_quantile(p: f64) -> f64 {
    std::f64::consts::SQRT_2 * erfc_inv(2.0 * p)
}
