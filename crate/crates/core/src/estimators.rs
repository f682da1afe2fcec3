//! Point estimators of the null proportion and of the k-FDR at a fixed
//! threshold, and the data-driven thresholds built from them.

use crate::binom::upper_tail;
use crate::critical::check_alpha;
use crate::error::{domain, Result};
use crate::stepup::PValueSet;

/// Which k-FDR estimate a threshold is derived from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ThresholdForm {
    /// [`kfdr_hat`], using `π̂₀(λ)`.
    Plain,
    /// [`kfdr_hat_star`], using `π̂₀*(λ)` and set to 1 beyond `λ`.
    Modified,
}

fn check_lambda_closed(lambda: f64) -> Result<()> {
    if (0.0..1.0).contains(&lambda) {
        Ok(())
    } else {
        Err(domain!("tuning lambda = {lambda} outside [0, 1)"))
    }
}

fn check_lambda_open(lambda: f64) -> Result<()> {
    if lambda > 0.0 && lambda < 1.0 {
        Ok(())
    } else {
        Err(domain!("tuning lambda = {lambda} outside (0, 1)"))
    }
}

fn check_nonempty(pvals: &PValueSet) -> Result<usize> {
    match pvals.len() {
        0 => Err(domain!("empty p-value set")),
        n => Ok(n),
    }
}

/// Storey's estimate `(n - R_n(λ)) / (n(1 - λ))`.
pub fn pi0_hat(pvals: &PValueSet, lambda: f64) -> Result<f64> {
    check_lambda_closed(lambda)?;
    let n = check_nonempty(pvals)? as f64;
    let r = pvals.count_at_most(lambda) as f64;
    Ok((n - r) / (n * (1.0 - lambda)))
}

/// `(n - R_n(λ) + 1) / (n(1 - λ))`.
pub fn pi0_hat_star(pvals: &PValueSet, lambda: f64) -> Result<f64> {
    check_lambda_open(lambda)?;
    let n = check_nonempty(pvals)? as f64;
    let r = pvals.count_at_most(lambda) as f64;
    Ok((n - r + 1.0) / (n * (1.0 - lambda)))
}

fn check_order(k: usize, n: usize) -> Result<()> {
    if k == 0 || k > n {
        return Err(domain!("order k = {k} must satisfy 1 <= k <= n = {n}"));
    }
    Ok(())
}

fn check_t(t: f64) -> Result<()> {
    if t > 0.0 && t < 1.0 {
        Ok(())
    } else {
        Err(domain!("threshold t = {t} outside (0, 1)"))
    }
}

#[inline]
fn estimate(n: usize, pi0: f64, k: usize, t: f64, r_t: usize) -> f64 {
    let g = upper_tail(k as u64 - 1, n as u64 - 1, t);
    n as f64 * pi0 * t * g / r_t.max(1) as f64
}

/// `n π̂₀(λ) t G(k-1, n-1, t) / (R_n(t) ∨ 1)`. Not truncated at 1.
pub fn kfdr_hat(pvals: &PValueSet, t: f64, k: usize, lambda: f64) -> Result<f64> {
    check_t(t)?;
    let pi0 = pi0_hat(pvals, lambda)?;
    let n = pvals.len();
    check_order(k, n)?;
    Ok(estimate(n, pi0, k, t, pvals.count_at_most(t)))
}

/// Like [`kfdr_hat`] with `π̂₀*(λ)` for `t ≤ λ`, and 1 for `t > λ`.
pub fn kfdr_hat_star(pvals: &PValueSet, t: f64, k: usize, lambda: f64) -> Result<f64> {
    check_t(t)?;
    let pi0 = pi0_hat_star(pvals, lambda)?;
    let n = pvals.len();
    check_order(k, n)?;
    if t > lambda {
        return Ok(1.0);
    }
    Ok(estimate(n, pi0, k, t, pvals.count_at_most(t)))
}

/// Largest candidate threshold `t` whose estimate is at most `α`, or 0.
///
/// The estimates are increasing in `t` between consecutive observed
/// p-values and jump down at each of them, so it suffices to scan the
/// distinct observed p-values (plus `λ` itself for the modified form).
/// Rejecting every `p ≤ t` then gives the threshold-form procedure.
pub fn threshold_t_alpha(
    pvals: &PValueSet,
    k: usize,
    alpha: f64,
    lambda: f64,
    form: ThresholdForm,
) -> Result<f64> {
    check_alpha(alpha)?;
    let n = check_nonempty(pvals)?;
    check_order(k, n)?;
    let pi0 = match form {
        ThresholdForm::Plain => pi0_hat(pvals, lambda)?,
        ThresholdForm::Modified => pi0_hat_star(pvals, lambda)?,
    };
    let sorted = pvals.sorted_values();
    let passes = |t: f64, r: usize| -> bool {
        if form == ThresholdForm::Modified && t > lambda {
            return false;
        }
        estimate(n, pi0, k, t, r) <= alpha
    };

    let mut best = 0.0f64;
    if form == ThresholdForm::Modified && passes(lambda, pvals.count_at_most(lambda)) {
        best = lambda;
    }
    // Walk distinct values from the top; the first hit is the largest.
    let mut i = n;
    while i > 0 {
        let t = sorted[i - 1];
        if t <= best {
            break;
        }
        // i is the count R_n(t): sorted[i-1] is the last copy of t.
        if passes(t, i) {
            best = t;
            break;
        }
        while i > 0 && sorted[i - 1] == t {
            i -= 1;
        }
    }
    Ok(best)
}
