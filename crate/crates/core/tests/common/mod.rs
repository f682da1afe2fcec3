//! Reference computations that share no code with the library.
#![allow(dead_code)]

use num_bigint::BigUint;

/// `Pr(Bin(n, a/2^e) ≥ k)` in exact integer arithmetic, rounded to f64.
pub fn exact_tail_dyadic(k: u64, n: u64, a: u64, e: u32) -> f64 {
    let one = BigUint::from(1u32);
    let scale = &one << e;
    let a_big = BigUint::from(a);
    let b_big = &scale - &a_big;
    let mut num = BigUint::from(0u32);
    let mut choose = one.clone();
    for j in 0..=n {
        if j >= k {
            num += &choose * a_big.pow(j as u32) * b_big.pow((n - j) as u32);
        }
        choose = choose * BigUint::from(n - j) / BigUint::from(j + 1);
    }
    let den = &one << (e as u64 * n);
    ratio_to_f64(&num, &den)
}

/// `num / den` correctly rounded up to truncation in the last bit.
fn ratio_to_f64(num: &BigUint, den: &BigUint) -> f64 {
    if num.bits() == 0 {
        return 0.0;
    }
    let shift = den.bits() as i64 - num.bits() as i64 + 64;
    let q = if shift >= 0 { (num << shift as u64) / den } else { (num >> (-shift) as u64) / den };
    let digits = q.to_u64_digits();
    let mut v = 0.0f64;
    for (i, d) in digits.iter().enumerate() {
        v += *d as f64 * 2f64.powi(64 * i as i32);
    }
    // Scale in two steps so tiny results do not underflow prematurely.
    let half = shift / 2;
    v * 2f64.powi(-half as i32) * 2f64.powi(-(shift - half) as i32)
}

/// `Σ_{j≥k} C(n, j) u^j (1-u)^{n-j}`, each term from exact log-factorials.
pub fn naive_tail(k: u64, n: u64, u: f64) -> f64 {
    if k == 0 {
        return 1.0;
    }
    if u == 0.0 {
        return 0.0;
    }
    if u == 1.0 {
        return 1.0;
    }
    let ln_fact = |m: u64| (1..=m).map(|i| (i as f64).ln()).sum::<f64>();
    let (lu, lq) = (u.ln(), (-u).ln_1p());
    let lnf: Vec<f64> = (0..=n).map(ln_fact).collect();
    (k..=n)
        .map(|j| {
            let lc = lnf[n as usize] - lnf[j as usize] - lnf[(n - j) as usize];
            (lc + j as f64 * lu + (n - j) as f64 * lq).exp()
        })
        .sum()
}

/// `E[V I(V ≥ k) / (R ∨ 1)]` for `n` independent hypotheses, each null and
/// rejected with probability `a`, non-null and rejected with probability
/// `b`, by visiting all `3^n` outcomes.
pub fn brute_kfdr(n: usize, k: usize, a: f64, b: f64) -> f64 {
    let c = 1.0 - a - b;
    let mut total = 0.0;
    for code in 0..3usize.pow(n as u32) {
        let (mut x, mut v, mut r, mut w) = (code, 0usize, 0usize, 1.0);
        for _ in 0..n {
            match x % 3 {
                0 => {
                    v += 1;
                    r += 1;
                    w *= a;
                }
                1 => {
                    r += 1;
                    w *= b;
                }
                _ => w *= c,
            }
            x /= 3;
        }
        if v >= k {
            total += w * v as f64 / r.max(1) as f64;
        }
    }
    total
}

/// Hochberg constants `α / (n - i + 1)`.
pub fn hochberg(n: usize, alpha: f64) -> Vec<f64> {
    (1..=n).map(|i| alpha / (n - i + 1) as f64).collect()
}

/// Stepup count by scanning every index (no early exit).
pub fn stepup_count(p: &[f64], cv: &[f64]) -> usize {
    let mut sorted = p.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut last = 0;
    for i in 0..sorted.len() {
        if sorted[i] <= cv[i] {
            last = i + 1;
        }
    }
    last
}
