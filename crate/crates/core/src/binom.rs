//! Binomial tail probabilities and the `G̃` transform.
//!
//! `G(k, n, u) = Pr(Bin(n, u) ≥ k)`, equivalently the probability that the
//! k-th order statistic of `n` uniforms is at most `u`. Every procedure in
//! this crate is built on top of it.
//!
//! Point masses are computed with Loader's saddle-point expansion, which
//! keeps full relative precision for large `n` where `lgamma`-based log
//! coefficients lose several digits. The tail is then summed from its
//! anchor term outward over whichever side is smaller, so no subtraction of
//! nearly equal quantities happens except `1 - S` with `S` at most about
//! one half.

use serde::Serialize;

use crate::error::{domain, Result};

/// A value in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize)]
pub struct Probability(f64);

impl Probability {
    pub fn new(value: f64) -> Result<Self> {
        if (0.0..=1.0).contains(&value) {
            Ok(Self(value))
        } else {
            Err(domain!("probability {value} outside [0, 1]"))
        }
    }

    #[inline]
    pub fn get(self) -> f64 {
        self.0
    }
}

impl From<Probability> for f64 {
    fn from(p: Probability) -> f64 {
        p.0
    }
}

/// Arguments of the binomial tail `G(k, n, u)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailParams {
    k: u64,
    n: u64,
    u: f64,
}

impl TailParams {
    pub fn new(k: u64, n: u64, u: f64) -> Result<Self> {
        if n == 0 {
            return Err(domain!("trial count n must be positive"));
        }
        if k > n {
            return Err(domain!("order k = {k} exceeds n = {n}"));
        }
        if !(0.0..=1.0).contains(&u) {
            return Err(domain!("u = {u} outside [0, 1]"));
        }
        Ok(Self { k, n, u })
    }

    pub fn k(&self) -> u64 {
        self.k
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn u(&self) -> f64 {
        self.u
    }
}

/// `Pr(Bin(n, u) ≥ k)`. `k = 0` gives 1.
pub fn binom_tail(p: TailParams) -> Probability {
    Probability(upper_tail(p.k, p.n, p.u))
}

/// `G̃_{k,n}(t) = t·G(k-1, n-1, t)` for `1 ≤ k ≤ n`, `t ∈ [0, 1]`.
pub fn g_tilde(k: u64, n: u64, t: f64) -> Result<Probability> {
    check_order(k, n)?;
    if !(0.0..=1.0).contains(&t) {
        return Err(domain!("t = {t} outside [0, 1]"));
    }
    Ok(Probability(g_tilde_raw(k, n, t)))
}

/// Inverse of [`g_tilde`] in its last argument.
///
/// Arguments at or below zero map to 0 and arguments at or above one map
/// to 1. Inside `(0, 1)` the root is located by bisection on `[y, 1]` down
/// to adjacent floating-point numbers; the returned point is the upper end
/// of the final bracket, so `G̃(result) ≥ y` and `result ≥ y`.
pub fn g_tilde_inv(k: u64, n: u64, y: f64) -> Result<f64> {
    check_order(k, n)?;
    Ok(g_tilde_inv_raw(k, n, y))
}

fn check_order(k: u64, n: u64) -> Result<()> {
    if k == 0 || k > n {
        return Err(domain!("order k = {k} must satisfy 1 <= k <= n = {n}"));
    }
    Ok(())
}

#[inline]
pub(crate) fn g_tilde_raw(k: u64, n: u64, t: f64) -> f64 {
    t * upper_tail(k - 1, n - 1, t)
}

pub(crate) fn g_tilde_inv_raw(k: u64, n: u64, y: f64) -> f64 {
    if !(y > 0.0) {
        return 0.0;
    }
    if y >= 1.0 {
        return 1.0;
    }
    let mut lo = y;
    if g_tilde_raw(k, n, lo) >= y {
        return lo;
    }
    let mut hi = 1.0;
    loop {
        let mid = lo + 0.5 * (hi - lo);
        if mid <= lo || mid >= hi {
            break;
        }
        if g_tilde_raw(k, n, mid) < y {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}

/// Unchecked `G(k, n, u)`; callers guarantee `k ≤ n` and `u ∈ [0, 1]`.
pub(crate) fn upper_tail(k: u64, n: u64, u: f64) -> f64 {
    if k == 0 || u >= 1.0 {
        return 1.0;
    }
    if u <= 0.0 {
        return 0.0;
    }
    let q = 1.0 - u;
    let odds = u / q;
    let nf = n as f64;
    if k as f64 > nf * u {
        // Upper side is the smaller one; terms decrease from j = k on.
        let mut term = binom_pmf(k, n, u);
        let mut sum = term;
        let mut j = k;
        while j < n && term > 0.0 {
            let ratio = (n - j) as f64 / (j + 1) as f64 * odds;
            term *= ratio;
            j += 1;
            sum += term;
            if ratio < 1.0 && term * ratio < sum * f64::EPSILON * 0.0625 * (1.0 - ratio) {
                break;
            }
        }
        sum.min(1.0)
    } else {
        // Lower side Pr(X ≤ k-1); terms decrease from j = k-1 downward.
        let mut term = binom_pmf(k - 1, n, u);
        let mut sum = term;
        let mut j = k - 1;
        while j > 0 && term > 0.0 {
            let ratio = j as f64 / (n - j + 1) as f64 / odds;
            term *= ratio;
            j -= 1;
            sum += term;
            if ratio < 1.0 && term * ratio < sum * f64::EPSILON * 0.0625 * (1.0 - ratio) {
                break;
            }
        }
        (1.0 - sum).clamp(0.0, 1.0)
    }
}

/// Binomial point mass `Pr(Bin(n, p) = x)`, accurate to a few ulps for any
/// `n` (Loader's algorithm).
pub fn binom_pmf(x: u64, n: u64, p: f64) -> f64 {
    if x > n {
        return 0.0;
    }
    let q = 1.0 - p;
    if p <= 0.0 {
        return if x == 0 { 1.0 } else { 0.0 };
    }
    if q <= 0.0 {
        return if x == n { 1.0 } else { 0.0 };
    }
    let nf = n as f64;
    if x == 0 {
        if n == 0 {
            return 1.0;
        }
        let lc = if p < 0.1 { -bd0(nf, nf * q) - nf * p } else { nf * q.ln() };
        return lc.exp();
    }
    if x == n {
        let lc = if q < 0.1 { -bd0(nf, nf * p) - nf * q } else { nf * p.ln() };
        return lc.exp();
    }
    let xf = x as f64;
    let lc = stirlerr(n) - stirlerr(x) - stirlerr(n - x) - bd0(xf, nf * p) - bd0(nf - xf, nf * q);
    let lf = std::f64::consts::TAU.ln() + xf.ln() + (-xf / nf).ln_1p();
    (lc - 0.5 * lf).exp()
}

/// `ln(n!) - [(n + 1/2) ln n - n + ln √(2π)]` for integer `n ≥ 1`.
fn stirlerr(n: u64) -> f64 {
    const TABLE: [f64; 16] = [
        0.0,
        0.081_061_466_795_327_258_219_67,
        0.041_340_695_955_409_294_093_82,
        0.027_677_925_684_998_339_148_79,
        0.020_790_672_103_765_093_111_52,
        0.016_644_691_189_821_192_163_19,
        0.013_876_128_823_070_747_998_75,
        0.011_896_709_945_891_770_095_06,
        0.010_411_265_261_972_096_497_48,
        0.009_255_462_182_712_732_917_729,
        0.008_330_563_433_362_871_256_469,
        0.007_573_675_487_951_840_794_972,
        0.006_942_840_107_209_529_865_664,
        0.006_408_994_188_004_207_068_44,
        0.005_951_370_112_758_847_735_624,
        0.005_554_733_551_962_801_371_039,
    ];
    const S0: f64 = 1.0 / 12.0;
    const S1: f64 = 1.0 / 360.0;
    const S2: f64 = 1.0 / 1260.0;
    const S3: f64 = 1.0 / 1680.0;
    const S4: f64 = 1.0 / 1188.0;

    if n <= 15 {
        return TABLE[n as usize];
    }
    let nf = n as f64;
    let nn = nf * nf;
    if nf > 500.0 {
        (S0 - S1 / nn) / nf
    } else if nf > 80.0 {
        (S0 - (S1 - S2 / nn) / nn) / nf
    } else if nf > 35.0 {
        (S0 - (S1 - (S2 - S3 / nn) / nn) / nn) / nf
    } else {
        (S0 - (S1 - (S2 - (S3 - S4 / nn) / nn) / nn) / nn) / nf
    }
}

/// Deviance term `x ln(x/np) + np - x`, evaluated by series when `x ≈ np`.
fn bd0(x: f64, np: f64) -> f64 {
    if (x - np).abs() < 0.1 * (x + np) {
        let mut v = (x - np) / (x + np);
        let mut s = (x - np) * v;
        if s.abs() < f64::MIN_POSITIVE {
            return s;
        }
        let mut ej = 2.0 * x * v;
        v *= v;
        for j in 1..1000 {
            ej *= v;
            let s1 = s + ej / (2 * j + 1) as f64;
            if s1 == s {
                return s1;
            }
            s = s1;
        }
    }
    x * (x / np).ln() + np - x
}
