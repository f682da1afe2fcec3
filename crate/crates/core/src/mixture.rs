//! Exact error rates of the single-step test "reject `H_i` iff `p_i ≤ t`"
//! when each hypothesis is independently null with probability `π₀`.
//!
//! Null p-values are uniform and non-null ones follow `F₁`, so a p-value
//! falls at or below `t` with probability `F(t) = π₀ t + (1 - π₀) F₁(t)`.

use serde::Serialize;

use crate::binom::{binom_pmf, upper_tail};
use crate::error::{domain, Result};
use crate::normal;

/// A cdf on `[0, 1]` given by points and linear interpolation between them.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseCdf {
    u: Vec<f64>,
    f: Vec<f64>,
}

impl PiecewiseCdf {
    /// Accepts `(u, F₁(u))` points with strictly increasing `u` and
    /// nondecreasing `F₁(u)`, all in `[0, 1]`. The endpoints `(0, 0)` and
    /// `(1, 1)` are added when missing.
    pub fn new(points: &[(f64, f64)]) -> Result<Self> {
        let mut u = Vec::with_capacity(points.len() + 2);
        let mut f = Vec::with_capacity(points.len() + 2);
        for &(x, y) in points {
            if !(0.0..=1.0).contains(&x) || !(0.0..=1.0).contains(&y) {
                return Err(domain!("cdf point ({x}, {y}) outside the unit square"));
            }
            if let (Some(&px), Some(&py)) = (u.last(), f.last()) {
                if x <= px {
                    return Err(domain!("cdf abscissae must increase strictly (at u = {x})"));
                }
                if y < py {
                    return Err(domain!("cdf decreases between u = {px} and u = {x}"));
                }
            }
            u.push(x);
            f.push(y);
        }
        match u.first() {
            Some(&x) if x == 0.0 => {
                if f[0] != 0.0 {
                    return Err(domain!("cdf must vanish at 0, got {}", f[0]));
                }
            }
            _ => {
                u.insert(0, 0.0);
                f.insert(0, 0.0);
            }
        }
        match u.last() {
            Some(&x) if x == 1.0 => {
                if *f.last().unwrap() != 1.0 {
                    return Err(domain!("cdf must equal 1 at 1, got {}", f.last().unwrap()));
                }
            }
            _ => {
                u.push(1.0);
                f.push(1.0);
            }
        }
        Ok(Self { u, f })
    }

    pub fn eval(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        if x >= 1.0 {
            return 1.0;
        }
        let i = self.u.partition_point(|&a| a <= x);
        let (u0, u1) = (self.u[i - 1], self.u[i]);
        let (f0, f1) = (self.f[i - 1], self.f[i]);
        f0 + (f1 - f0) * (x - u0) / (u1 - u0)
    }
}

/// Distribution of a non-null p-value.
#[derive(Debug, Clone, PartialEq)]
pub enum Alternative {
    /// Two-sided z-test p-value when the mean is `mu` instead of 0.
    NormalShift { mu: f64 },
    Table(PiecewiseCdf),
}

impl Alternative {
    pub fn cdf(&self, u: f64) -> f64 {
        if u <= 0.0 {
            return 0.0;
        }
        if u >= 1.0 {
            return 1.0;
        }
        match self {
            Alternative::NormalShift { mu } => {
                let c = normal::upper_quantile(0.5 * u);
                (normal::upper(c - mu) + normal::upper(c + mu)).min(1.0)
            }
            Alternative::Table(t) => t.eval(u),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MixtureModel {
    pi0: f64,
    alt: Alternative,
}

impl MixtureModel {
    pub fn new(pi0: f64, alt: Alternative) -> Result<Self> {
        if !(0.0..=1.0).contains(&pi0) {
            return Err(domain!("null proportion {pi0} outside [0, 1]"));
        }
        if let Alternative::NormalShift { mu } = alt {
            if !mu.is_finite() {
                return Err(domain!("effect size must be finite, got {mu}"));
            }
        }
        Ok(Self { pi0, alt })
    }

    pub fn normal_shift(pi0: f64, mu: f64) -> Result<Self> {
        Self::new(pi0, Alternative::NormalShift { mu })
    }

    pub fn pi0(&self) -> f64 {
        self.pi0
    }

    pub fn alternative(&self) -> &Alternative {
        &self.alt
    }

    pub fn f1(&self, u: f64) -> f64 {
        self.alt.cdf(u)
    }

    /// `F(u) = π₀ u + (1 - π₀) F₁(u)`.
    pub fn f(&self, u: f64) -> f64 {
        (self.pi0 * u + (1.0 - self.pi0) * self.f1(u)).min(1.0)
    }

    /// Cell probabilities `(a, F)`: a true null rejected, any rejection.
    fn cells(&self, t: f64) -> (f64, f64) {
        let a = self.pi0 * t;
        (a, self.f(t).max(a))
    }
}

/// Joint law of (false rejections, rejections) among `m` hypotheses.
#[derive(Debug, Clone)]
pub struct JointVRDistribution {
    m: usize,
    rows: Vec<Vec<f64>>,
}

impl JointVRDistribution {
    /// Law of `(V_m(t), R_m(t))` for `m` independent hypotheses.
    pub fn over(m: usize, model: &MixtureModel, t: f64) -> Result<Self> {
        check_t(t)?;
        let (a, f) = model.cells(t);
        let cond = if f > 0.0 { (a / f).min(1.0) } else { 0.0 };
        let rows = (0..=m)
            .map(|r| {
                let pr = binom_pmf(r as u64, m as u64, f);
                (0..=r).map(|v| pr * binom_pmf(v as u64, r as u64, cond)).collect()
            })
            .collect();
        Ok(Self { m, rows })
    }

    pub fn hypotheses(&self) -> usize {
        self.m
    }

    /// `Pr(V = v, R = r)`, zero outside `0 ≤ v ≤ r ≤ m`.
    pub fn weight(&self, v: usize, r: usize) -> f64 {
        self.rows.get(r).and_then(|row| row.get(v)).copied().unwrap_or(0.0)
    }

    pub fn total(&self) -> f64 {
        self.rows.iter().flatten().sum()
    }

    /// `E[h(V, R)]` over the lattice.
    pub fn expect(&self, h: impl Fn(usize, usize) -> f64) -> f64 {
        let mut s = 0.0;
        for (r, row) in self.rows.iter().enumerate() {
            for (v, w) in row.iter().enumerate() {
                if *w > 0.0 {
                    s += w * h(v, r);
                }
            }
        }
        s
    }
}

/// Law of `(V_{n-1}(t), R_{n-1}(t))`, the counts among the other `n - 1`.
pub fn joint_vr(n: usize, model: &MixtureModel, t: f64) -> Result<JointVRDistribution> {
    if n == 0 {
        return Err(domain!("need at least one hypothesis"));
    }
    JointVRDistribution::over(n - 1, model, t)
}

fn check_t(t: f64) -> Result<()> {
    if t > 0.0 && t < 1.0 {
        Ok(())
    } else {
        Err(domain!("threshold t = {t} outside (0, 1)"))
    }
}

fn check_order(n: usize, k: usize) -> Result<()> {
    if k == 0 || k > n {
        return Err(domain!("order k = {k} must satisfy 1 <= k <= n = {n}"));
    }
    Ok(())
}

/// `E[V I(V ≥ k) / (R ∨ 1)]`, computed as
/// `n π₀ t E[I(V_{n-1} ≥ k-1) / (R_{n-1} + 1)]`.
///
/// Given `R_{n-1} = r`, `V_{n-1}` is `Bin(r, π₀t/F)`, so each lattice row
/// collapses to a binomial tail.
pub fn exact_kfdr_single_step(n: usize, k: usize, model: &MixtureModel, t: f64) -> Result<f64> {
    check_order(n, k)?;
    check_t(t)?;
    let (a, f) = model.cells(t);
    if a == 0.0 {
        return Ok(0.0);
    }
    let m = (n - 1) as u64;
    let cond = (a / f).min(1.0);
    let kk = (k - 1) as u64;
    let mut s = 0.0;
    for r in kk..=m {
        let pr = binom_pmf(r, m, f);
        if pr == 0.0 {
            continue;
        }
        s += pr * upper_tail(kk, r, cond) / (r + 1) as f64;
    }
    Ok((n as f64 * a * s).min(1.0))
}

/// Which of the two equivalent FDR expressions to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FdrForm {
    /// `n π₀ t E[1 / (R_{n-1} + 1)]`, summed over the binomial law.
    InverseCount,
    /// `(π₀ t / F(t)) (1 - (1 - F(t))^n)`.
    Ratio,
}

/// FDR of the single-step test.
pub fn exact_fdr_single_step(n: usize, model: &MixtureModel, t: f64, form: FdrForm) -> Result<f64> {
    check_order(n, 1)?;
    check_t(t)?;
    let (a, f) = model.cells(t);
    if a == 0.0 {
        return Ok(0.0);
    }
    let v = match form {
        FdrForm::InverseCount => {
            let m = (n - 1) as u64;
            let s: f64 = (0..=m).map(|r| binom_pmf(r, m, f) / (r + 1) as f64).sum();
            n as f64 * a * s
        }
        FdrForm::Ratio => a / f * at_least_one(n, f),
    };
    Ok(v.min(1.0))
}

/// `1 - (1 - f)^n` without cancellation for small `f`.
fn at_least_one(n: usize, f: f64) -> f64 {
    if f >= 1.0 {
        1.0
    } else {
        -(n as f64 * (-f).ln_1p()).exp_m1()
    }
}

/// `E[1 / (R_{n-1} + 1)] = (1 - (1 - F)^n) / (n F)`, with the limit 1 at
/// `F = 0`.
pub fn expected_inv_r_plus1(n: usize, f: f64) -> Result<f64> {
    check_order(n, 1)?;
    if !(0.0..=1.0).contains(&f) {
        return Err(domain!("probability F = {f} outside [0, 1]"));
    }
    if f == 0.0 {
        return Ok(1.0);
    }
    Ok(at_least_one(n, f) / (n as f64 * f))
}

/// `Pr(V_{n-1}(t) ≥ k - 1) = G(k-1, n-1, π₀ t)`.
pub fn kfwer_prev(n: usize, k: usize, pi0: f64, t: f64) -> Result<f64> {
    check_order(n, k)?;
    check_t(t)?;
    if !(0.0..=1.0).contains(&pi0) {
        return Err(domain!("null proportion {pi0} outside [0, 1]"));
    }
    Ok(upper_tail((k - 1) as u64, (n - 1) as u64, pi0 * t))
}

/// `E[V I(V ≥ k)] / E[R I(R ≥ 1)] = (π₀ t / F(t)) G(k-1, n-1, π₀ t)`.
pub fn marginal_kfdr_quantity(n: usize, k: usize, model: &MixtureModel, t: f64) -> Result<f64> {
    check_order(n, k)?;
    check_t(t)?;
    let (a, f) = model.cells(t);
    if f == 0.0 {
        return Err(domain!("rejection probability F(t) is zero at t = {t}"));
    }
    Ok(a / f * upper_tail((k - 1) as u64, (n - 1) as u64, a))
}

/// `(k-FDR, Pr(V_{n-1} ≥ k-1) · FDR)`; the first never exceeds the second.
pub fn kfdr_fdr_bound(n: usize, k: usize, model: &MixtureModel, t: f64) -> Result<(f64, f64)> {
    let lhs = exact_kfdr_single_step(n, k, model, t)?;
    let fdr = exact_fdr_single_step(n, model, t, FdrForm::Ratio)?;
    let rhs = kfwer_prev(n, k, model.pi0, t)? * fdr;
    Ok((lhs, rhs))
}

/// `Pr(V_n(t) ≥ k) = G(k, n, π₀ t)`.
pub fn kfwer_single_step(n: usize, k: usize, model: &MixtureModel, t: f64) -> Result<f64> {
    check_order(n, k)?;
    check_t(t)?;
    Ok(upper_tail(k as u64, n as u64, model.pi0 * t))
}

/// One point of a parameter sweep, in CSV column order.
#[derive(Debug, Clone, Serialize)]
pub struct MixtureGridRow {
    pub n: usize,
    pub k: usize,
    pub pi0: f64,
    pub t: f64,
    pub kfdr_exact: f64,
    #[serde(rename = "fdr_24")]
    pub fdr_inverse_count: f64,
    #[serde(rename = "fdr_25")]
    pub fdr_ratio: f64,
    pub bound_rhs: f64,
    pub kfwer: f64,
}

impl MixtureGridRow {
    pub fn evaluate(n: usize, k: usize, model: &MixtureModel, t: f64) -> Result<Self> {
        let (kfdr_exact, bound_rhs) = kfdr_fdr_bound(n, k, model, t)?;
        Ok(Self {
            n,
            k,
            pi0: model.pi0,
            t,
            kfdr_exact,
            fdr_inverse_count: exact_fdr_single_step(n, model, t, FdrForm::InverseCount)?,
            fdr_ratio: exact_fdr_single_step(n, model, t, FdrForm::Ratio)?,
            bound_rhs,
            kfwer: kfwer_single_step(n, k, model, t)?,
        })
    }
}

/// Rows for every combination of the given grids, in `n, k, π₀, t` order.
/// Combinations with `k > n` are skipped.
pub fn grid(
    ns: &[usize],
    ks: &[usize],
    pi0s: &[f64],
    ts: &[f64],
    alt: &Alternative,
) -> Result<Vec<MixtureGridRow>> {
    let mut out = Vec::new();
    for &n in ns {
        for &k in ks {
            if k > n {
                continue;
            }
            for &pi0 in pi0s {
                let model = MixtureModel::new(pi0, alt.clone())?;
                for &t in ts {
                    out.push(MixtureGridRow::evaluate(n, k, &model, t)?);
                }
            }
        }
    }
    Ok(out)
}
