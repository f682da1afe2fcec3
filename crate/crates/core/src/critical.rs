//! Critical-value families for stepup procedures.
//!
//! All generators return a nondecreasing length-`n` sequence in `[0, 1]`.
//! The k-FDR families (`Proc1`, `Oracle`, `SarkarKfdr`) hold their first
//! `k - 1` values constant at the k-th one: those positions cannot affect
//! the k-FDR, and keeping them at the k-th value is the most liberal
//! admissible choice.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::binom::g_tilde_inv_raw;
use crate::error::{domain, Result};

/// How the stage-two constants of the adaptive two-stage procedure are
/// formed from `x = iα(1-λ)/(n-j+1)`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Proc2Variant {
    /// `λ·min(G̃⁻¹(x/λ), 1)`. Proven to control the k-FDR under
    /// independence.
    #[default]
    Scaled,
    /// `min(G̃⁻¹(x), λ)`. The threshold-form equivalent; control is only
    /// established for `k = 1`.
    Capped,
}

/// Procedure family together with its family-specific parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "kebab-case")]
pub enum Method {
    /// Benjamini–Hochberg, constants `iα/n`. Ignores `k`.
    Bh,
    /// Stepup with `α_i = G̃_{k,n}⁻¹(iα/n)`.
    Proc1,
    /// Two-stage adaptive procedure with tuning `λ ∈ (0, 1)`.
    Proc2 {
        lambda: f64,
        #[serde(default)]
        variant: Proc2Variant,
    },
    /// Stepup Lehmann–Romano / generalized Hochberg k-FWER procedure.
    GenHochberg,
    /// Sarkar's stepup k-FWER procedure.
    SarkarKfwer,
    /// Sarkar's stepup k-FDR procedure.
    SarkarKfdr,
    /// Procedure 1 with the true number of nulls `n0` plugged in. In
    /// simulations `n0 = None` means "use the replicate's true count".
    Oracle {
        #[serde(default)]
        n0: Option<usize>,
    },
    /// Non-random threshold: reject every `p ≤ t`.
    SingleStep { t: f64 },
}

impl Method {
    pub fn label(&self) -> &'static str {
        match self {
            Method::Bh => "bh",
            Method::Proc1 => "proc1",
            Method::Proc2 { variant: Proc2Variant::Scaled, .. } => "proc2",
            Method::Proc2 { variant: Proc2Variant::Capped, .. } => "proc2-capped",
            Method::GenHochberg => "gen-hochberg",
            Method::SarkarKfwer => "sarkar-kfwer",
            Method::SarkarKfdr => "sarkar-kfdr",
            Method::Oracle { .. } => "oracle",
            Method::SingleStep { .. } => "single-step",
        }
    }

    pub fn lambda(&self) -> Option<f64> {
        match self {
            Method::Proc2 { lambda, .. } => Some(*lambda),
            _ => None,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// A fully parameterised procedure.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProcedureSpec {
    #[serde(flatten)]
    pub method: Method,
    pub k: usize,
    pub alpha: f64,
}

impl ProcedureSpec {
    pub fn new(method: Method, k: usize, alpha: f64) -> Result<Self> {
        let spec = Self { method, k, alpha };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(domain!("order k must be at least 1"));
        }
        check_alpha(self.alpha)?;
        match self.method {
            Method::Proc2 { lambda, .. } => check_lambda(lambda),
            Method::Oracle { n0: Some(n0) } if n0 < self.k => {
                Err(domain!("oracle needs n0 >= k (n0 = {n0}, k = {})", self.k))
            }
            Method::SingleStep { t } if !(t > 0.0 && t < 1.0) => {
                Err(domain!("single-step threshold t = {t} outside (0, 1)"))
            }
            _ => Ok(()),
        }
    }

    /// False for the capped two-stage variant with `k > 1`, whose k-FDR
    /// control is not established.
    pub fn control_proven(&self) -> bool {
        !matches!(
            self.method,
            Method::Proc2 { variant: Proc2Variant::Capped, .. }
        ) || self.k == 1
    }
}

/// Family tag carried by a [`CriticalValues`] sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    Bh,
    Proc1,
    Proc2Stage2,
    GenHochberg,
    SarkarKfwer,
    SarkarKfdr,
    Oracle,
}

/// Nondecreasing stepup constants `α_1 ≤ … ≤ α_n`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CriticalValues {
    values: Vec<f64>,
    k: usize,
    family: Family,
}

impl CriticalValues {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn family(&self) -> Family {
        self.family
    }
}

pub(crate) fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(domain!("level alpha = {alpha} outside (0, 1)"))
    }
}

pub(crate) fn check_lambda(lambda: f64) -> Result<()> {
    if lambda > 0.0 && lambda < 1.0 {
        Ok(())
    } else {
        Err(domain!("tuning lambda = {lambda} outside (0, 1)"))
    }
}

fn check(n: usize, k: usize, alpha: f64) -> Result<()> {
    if n == 0 {
        return Err(domain!("number of hypotheses must be positive"));
    }
    if k == 0 || k > n {
        return Err(domain!("order k = {k} must satisfy 1 <= k <= n = {n}"));
    }
    check_alpha(alpha)
}

fn build(n: usize, k: usize, family: Family, f: impl Fn(usize) -> f64) -> CriticalValues {
    CriticalValues {
        values: (1..=n).map(f).collect(),
        k,
        family,
    }
}

/// Benjamini–Hochberg constants `iα/n`.
pub fn cv_bh(n: usize, alpha: f64) -> Result<CriticalValues> {
    check(n, 1, alpha)?;
    Ok(build(n, 1, Family::Bh, |i| i as f64 * alpha / n as f64))
}

/// `α_i = G̃_{k,n}⁻¹(max(i, k)·α/n)`.
pub fn cv_proc1(n: usize, k: usize, alpha: f64) -> Result<CriticalValues> {
    check(n, k, alpha)?;
    let (kk, nn) = (k as u64, n as u64);
    Ok(build(n, k, Family::Proc1, |i| {
        g_tilde_inv_raw(kk, nn, i.max(k) as f64 * alpha / n as f64)
    }))
}

/// Procedure 1 constants without the constant-leading-values convention,
/// `α_i = G̃_{k,n}⁻¹(iα/n)` for every `i`. This is the form whose stepup
/// rule coincides exactly with the plain estimator threshold.
pub fn cv_proc1_raw(n: usize, k: usize, alpha: f64) -> Result<CriticalValues> {
    check(n, k, alpha)?;
    let (kk, nn) = (k as u64, n as u64);
    Ok(build(n, k, Family::Proc1, |i| {
        g_tilde_inv_raw(kk, nn, i as f64 * alpha / n as f64)
    }))
}

/// Generalized Hochberg: `kα/(n - max(i, k) + k)`.
pub fn cv_gen_hochberg(n: usize, k: usize, alpha: f64) -> Result<CriticalValues> {
    check(n, k, alpha)?;
    Ok(build(n, k, Family::GenHochberg, |i| {
        let d = n - i.max(k) + k;
        // kα/k would round above α
        if d == k { alpha } else { k as f64 * alpha / d as f64 }
    }))
}

/// Sarkar's k-FWER: `(α ∏_{j=1}^{k} j/(n - max(i,k) + j))^{1/k}`.
pub fn cv_sarkar_kfwer(n: usize, k: usize, alpha: f64) -> Result<CriticalValues> {
    check(n, k, alpha)?;
    Ok(build(n, k, Family::SarkarKfwer, |i| {
        let m = i.max(k);
        kth_root(alpha, n - m, k, k)
    }))
}

/// Sarkar's k-FDR: `((max(i,k)/n) α ∏_{j=1}^{k-1} j/(n - max(i,k) + j))^{1/k}`.
pub fn cv_sarkar_kfdr(n: usize, k: usize, alpha: f64) -> Result<CriticalValues> {
    check(n, k, alpha)?;
    Ok(build(n, k, Family::SarkarKfdr, |i| {
        let m = i.max(k);
        kth_root(m as f64 * alpha / n as f64, n - m, k - 1, k)
    }))
}

/// `(lead · ∏_{j=1}^{terms} j/(offset + j))^{1/root}`, falling back to logs
/// if the direct product underflows.
fn kth_root(lead: f64, offset: usize, terms: usize, root: usize) -> f64 {
    let direct = (1..=terms).fold(lead, |acc, j| acc * j as f64 / (offset + j) as f64);
    if direct > 1e-280 {
        return if root == 1 { direct } else { direct.powf(1.0 / root as f64) };
    }
    let log: f64 = lead.ln()
        + (1..=terms)
            .map(|j| (j as f64).ln() - ((offset + j) as f64).ln())
            .sum::<f64>();
    (log / root as f64).exp()
}

/// Oracle constants `G̃_{k,n0}⁻¹(max(i, k)·α/n0)` for `i = 1..n`.
pub fn cv_oracle(n: usize, k: usize, alpha: f64, n0: usize) -> Result<CriticalValues> {
    check(n, k, alpha)?;
    if n0 < k {
        return Err(domain!("oracle needs n0 >= k (n0 = {n0}, k = {k})"));
    }
    let (kk, nn0) = (k as u64, n0 as u64);
    Ok(build(n, k, Family::Oracle, |i| {
        g_tilde_inv_raw(kk, nn0, i.max(k) as f64 * alpha / n0 as f64)
    }))
}

/// Stage-two constants of the two-stage procedure given `j` p-values at
/// or below `λ`; the returned sequence has length `j`.
pub fn cv_proc2_stage2(
    n: usize,
    k: usize,
    alpha: f64,
    lambda: f64,
    j: usize,
    variant: Proc2Variant,
) -> Result<CriticalValues> {
    check(n, k, alpha)?;
    check_lambda(lambda)?;
    if j == 0 || j > n {
        return Err(domain!("stage-one count j = {j} must satisfy 1 <= j <= n = {n}"));
    }
    let (kk, nn) = (k as u64, n as u64);
    let scale = alpha * (1.0 - lambda) / (n - j + 1) as f64;
    let values = (1..=j)
        .map(|i| stage2_value(kk, nn, i as f64 * scale, lambda, variant))
        .collect();
    Ok(CriticalValues {
        values,
        k,
        family: Family::Proc2Stage2,
    })
}

#[inline]
pub(crate) fn stage2_value(k: u64, n: u64, x: f64, lambda: f64, variant: Proc2Variant) -> f64 {
    match variant {
        Proc2Variant::Scaled => lambda * g_tilde_inv_raw(k, n, x / lambda).min(1.0),
        Proc2Variant::Capped => g_tilde_inv_raw(k, n, x).min(lambda),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn proc1_reduces_to_bh() {
        let cv = cv_proc1(10, 1, 0.05).unwrap();
        let bh = cv_bh(10, 0.05).unwrap();
        assert_eq!(cv.values(), bh.values());
        assert!(close(cv.values()[9], 0.05, 1e-15));
        assert!(close(cv.values()[0], 0.005, 1e-15));
    }

    #[test]
    fn proc1_small_case() {
        let cv = cv_proc1(5, 2, 0.05).unwrap();
        // Root of t(1 - (1-t)^4) = 0.05.
        let f = |t: f64| t * (1.0 - (1.0 - t).powi(4)) - 0.05;
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if f(mid) < 0.0 {
                lo = mid
            } else {
                hi = mid
            }
        }
        assert!(close(cv.values()[4], hi, 1e-12));
        for (i, v) in cv.values().iter().enumerate() {
            assert!(*v >= (i + 1) as f64 * 0.01);
        }
        assert_eq!(cv.values()[0], cv.values()[1]);
    }

    #[test]
    fn gen_hochberg_examples() {
        let cv = cv_gen_hochberg(10, 2, 0.05).unwrap();
        assert!(close(cv.values()[0], 0.01, 1e-15));
        assert!(close(cv.values()[9], 0.05, 1e-15));
        assert!(close(cv.values()[4], 0.1 / 7.0, 1e-15));
        let h = cv_gen_hochberg(10, 1, 0.05).unwrap();
        for i in 1..=10 {
            assert!(close(h.values()[i - 1], 0.05 / (10 - i + 1) as f64, 1e-15));
        }
        for k in 1..=20 {
            assert_eq!(cv_gen_hochberg(1000, k, 0.05).unwrap().values()[999], 0.05);
        }
    }

    #[test]
    fn sarkar_kfwer_examples() {
        let cv = cv_sarkar_kfwer(10, 2, 0.05).unwrap();
        assert!(close(cv.values()[0], 1.0 / 30.0, 1e-14));
        assert!(close(cv.values()[1], 1.0 / 30.0, 1e-14));
        assert!(close(cv.values()[9], 0.05f64.sqrt(), 1e-14));
        let one = cv_sarkar_kfwer(10, 1, 0.05).unwrap();
        let gh = cv_gen_hochberg(10, 1, 0.05).unwrap();
        for (a, b) in one.values().iter().zip(gh.values()) {
            assert!(close(*a, *b, 1e-15));
        }
    }

    #[test]
    fn sarkar_kfdr_examples() {
        let one = cv_sarkar_kfdr(10, 1, 0.05).unwrap();
        for i in 1..=10 {
            assert!(close(one.values()[i - 1], i as f64 * 0.005, 1e-15));
        }
        let cv = cv_sarkar_kfdr(10, 2, 0.05).unwrap();
        assert!(close(cv.values()[1], (0.01f64 / 9.0).sqrt(), 1e-14));
        assert!(close(cv.values()[9], 0.05f64.sqrt(), 1e-14));
        assert_eq!(cv.values()[0], cv.values()[1]);
    }

    #[test]
    fn sarkar_log_path_matches_direct() {
        // Large k forces the logarithmic branch.
        let cv = cv_sarkar_kfwer(100_000, 200, 0.05).unwrap();
        let v = cv.values()[50_000];
        let m = 50_001usize;
        let log: f64 = 0.05f64.ln()
            + (1..=200)
                .map(|j| (j as f64).ln() - ((100_000 - m + j) as f64).ln())
                .sum::<f64>();
        assert!((v - (log / 200.0).exp()).abs() / v < 1e-12);
    }

    #[test]
    fn oracle_examples() {
        assert_eq!(
            cv_oracle(40, 3, 0.05, 40).unwrap().values(),
            cv_proc1(40, 3, 0.05).unwrap().values()
        );
        let cv = cv_oracle(5, 2, 0.05, 2).unwrap();
        assert!(close(cv.values()[4], 0.125f64.sqrt(), 1e-12));
        let p1 = cv_proc1(5, 2, 0.05).unwrap();
        let o5 = cv_oracle(5, 2, 0.05, 5).unwrap();
        assert_eq!(o5.values()[4], p1.values()[4]);
        assert!(cv_oracle(5, 3, 0.05, 2).is_err());
    }

    #[test]
    fn proc2_stage2_examples() {
        let cv = cv_proc2_stage2(10, 1, 0.05, 0.5, 10, Proc2Variant::Scaled).unwrap();
        assert!(close(cv.values()[0], 0.025, 1e-15));
        assert_eq!(cv.len(), 10);
        // Argument beyond one clamps to λ.
        let big = cv_proc2_stage2(10, 2, 0.9, 0.1, 10, Proc2Variant::Scaled).unwrap();
        assert_eq!(big.values()[9], 0.1);
        assert!(cv_proc2_stage2(10, 2, 0.05, 0.5, 0, Proc2Variant::Scaled).is_err());
        assert!(cv_proc2_stage2(10, 2, 0.05, 1.0, 3, Proc2Variant::Scaled).is_err());
    }

    #[test]
    fn domain_errors() {
        assert!(cv_proc1(0, 1, 0.05).is_err());
        assert!(cv_proc1(5, 0, 0.05).is_err());
        assert!(cv_proc1(5, 6, 0.05).is_err());
        assert!(cv_proc1(5, 2, 0.0).is_err());
        assert!(cv_proc1(5, 2, 1.0).is_err());
        assert!(cv_gen_hochberg(5, 2, f64::NAN).is_err());
    }

    #[test]
    fn spec_validation() {
        assert!(ProcedureSpec::new(Method::Proc1, 0, 0.05).is_err());
        assert!(ProcedureSpec::new(
            Method::Proc2 { lambda: 0.0, variant: Proc2Variant::Scaled },
            1,
            0.05
        )
        .is_err());
        assert!(ProcedureSpec::new(Method::Oracle { n0: Some(2) }, 3, 0.05).is_err());
        let capped = ProcedureSpec::new(
            Method::Proc2 { lambda: 0.5, variant: Proc2Variant::Capped },
            3,
            0.05,
        )
        .unwrap();
        assert!(!capped.control_proven());
        assert!(ProcedureSpec { k: 1, ..capped }.control_proven());
    }

    #[test]
    fn method_serde_shape() {
        let m: Method = serde_json::from_str(r#"{"method":"proc2","lambda":0.5}"#).unwrap();
        assert_eq!(m, Method::Proc2 { lambda: 0.5, variant: Proc2Variant::Scaled });
        let m: Method = serde_json::from_str(r#"{"method":"oracle"}"#).unwrap();
        assert_eq!(m, Method::Oracle { n0: None });
    }

    fn nondecreasing(v: &[f64]) -> bool {
        v.windows(2).all(|w| w[0] <= w[1])
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn families_nondecreasing(n in 1usize..300, kf in 0.0f64..1.0, alpha in 0.001f64..0.5) {
            let k = 1 + ((n - 1) as f64 * kf) as usize;
            for cv in [
                cv_bh(n, alpha).unwrap(),
                cv_proc1(n, k, alpha).unwrap(),
                cv_gen_hochberg(n, k, alpha).unwrap(),
                cv_sarkar_kfwer(n, k, alpha).unwrap(),
                cv_sarkar_kfdr(n, k, alpha).unwrap(),
                cv_oracle(n, k, alpha, n.max(k)).unwrap(),
            ] {
                prop_assert!(nondecreasing(cv.values()), "{:?}", cv.family());
                prop_assert!(cv.values().iter().all(|v| (0.0..=1.0).contains(v)));
            }
        }

        #[test]
        fn proc1_dominates(n in 1usize..400, kf in 0.0f64..1.0, alpha in 0.001f64..0.5) {
            let k = 1 + ((n - 1) as f64 * kf) as usize;
            let p1 = cv_proc1(n, k, alpha).unwrap();
            let bh = cv_bh(n, alpha).unwrap();
            let gh = cv_gen_hochberg(n, k, alpha).unwrap();
            for i in 0..n {
                prop_assert!(p1.values()[i] >= bh.values()[i]);
                // Equal in exact arithmetic at i = n; allow rounding there.
                if i + 1 >= k {
                    prop_assert!(p1.values()[i] >= gh.values()[i] * (1.0 - 4.0 * f64::EPSILON));
                }
            }
        }

        #[test]
        fn stage2_variants_ordered(
            n in 1usize..200, kf in 0.0f64..1.0, jf in 0.0f64..1.0,
            alpha in 0.001f64..0.5, lambda in 0.01f64..0.99,
        ) {
            let k = 1 + ((n - 1) as f64 * kf) as usize;
            let j = 1 + ((n - 1) as f64 * jf) as usize;
            let scaled = cv_proc2_stage2(n, k, alpha, lambda, j, Proc2Variant::Scaled).unwrap();
            let capped = cv_proc2_stage2(n, k, alpha, lambda, j, Proc2Variant::Capped).unwrap();
            prop_assert!(nondecreasing(scaled.values()));
            for (s, c) in scaled.values().iter().zip(capped.values()) {
                prop_assert!(*s <= lambda);
                prop_assert!(*s <= c + 1e-12);
            }
        }
    }
}
