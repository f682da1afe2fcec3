//! Seeded Monte Carlo estimates of average power, k-FDR and k-FWER.
//!
//! Each replicate draws `Z_i = μ_i + √ρ W + √(1-ρ) ε_i` with `W, ε_i` iid
//! standard normal, so every pair of statistics has correlation `ρ`, and
//! tests each mean against 0 with a two-sided p-value. Replicate `r` uses
//! the ChaCha stream `r` of the master seed, and replicates are reduced in
//! a fixed chunk order, so results do not depend on the thread count.

use std::sync::OnceLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::binom::g_tilde_inv_raw;
use crate::critical::{stage2_value, Method, Proc2Variant, ProcedureSpec};
use crate::error::{domain, Result};
use crate::normal::two_sided_p;
use crate::stepup::{critical_values, step_up_count};

const CHUNK: usize = 256;

/// Which hypotheses are false.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Design {
    /// The first `n1` means equal `mu`, the rest are 0.
    FixedFalseNulls { n1: usize },
    /// Each mean is independently 0 with probability `pi0`, else `mu`.
    Mixture { pi0: f64 },
}

fn default_mu() -> f64 {
    2.0
}

fn default_reps() -> usize {
    1000
}

fn default_alpha() -> f64 {
    0.05
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationSpec {
    pub n: usize,
    #[serde(flatten)]
    pub design: Design,
    #[serde(default = "default_mu")]
    pub mu: f64,
    #[serde(default)]
    pub rho: f64,
    #[serde(default = "default_reps")]
    pub reps: usize,
    #[serde(default)]
    pub seed: u64,
    pub k: usize,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    pub procedures: Vec<Method>,
}

impl SimulationSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(domain!("need at least one hypothesis"));
        }
        match self.design {
            Design::FixedFalseNulls { n1 } if n1 > self.n => {
                return Err(domain!("n1 = {n1} exceeds n = {}", self.n));
            }
            Design::Mixture { pi0 } if !(0.0..=1.0).contains(&pi0) => {
                return Err(domain!("null proportion {pi0} outside [0, 1]"));
            }
            _ => {}
        }
        if !(0.0..1.0).contains(&self.rho) {
            return Err(domain!("correlation rho = {} outside [0, 1)", self.rho));
        }
        if !self.mu.is_finite() {
            return Err(domain!("effect size mu = {} is not finite", self.mu));
        }
        if self.reps == 0 {
            return Err(domain!("need at least one replicate"));
        }
        if self.procedures.is_empty() {
            return Err(domain!("no procedures to simulate"));
        }
        if self.k > self.n {
            return Err(domain!("order k = {} exceeds n = {}", self.k, self.n));
        }
        for m in &self.procedures {
            self.procedure(*m).validate()?;
        }
        Ok(())
    }

    fn procedure(&self, method: Method) -> ProcedureSpec {
        ProcedureSpec { method, k: self.k, alpha: self.alpha }
    }

    fn n1(&self) -> Option<usize> {
        match self.design {
            Design::FixedFalseNulls { n1 } => Some(n1),
            Design::Mixture { .. } => None,
        }
    }
}

/// Test statistics of one replicate and which of them are non-null.
#[derive(Debug, Clone, PartialEq)]
pub struct Replicate {
    pub z: Vec<f64>,
    pub pvalues: Vec<f64>,
    pub is_alt: Vec<bool>,
}

/// Replicate `rep` of `spec`. In the mixture design the labels are drawn
/// first, then `W`, then the `ε_i` in index order.
pub fn gen_replicate(spec: &SimulationSpec, rep: u64) -> Replicate {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(rep);
    let n = spec.n;
    let is_alt: Vec<bool> = match spec.design {
        Design::FixedFalseNulls { n1 } => (0..n).map(|i| i < n1).collect(),
        Design::Mixture { pi0 } => (0..n).map(|_| rng.random::<f64>() >= pi0).collect(),
    };
    let w: f64 = rng.sample(StandardNormal);
    let (a, b) = (spec.rho.sqrt(), (1.0 - spec.rho).sqrt());
    let shared = a * w;
    let z: Vec<f64> = is_alt
        .iter()
        .map(|&alt| {
            let e: f64 = rng.sample(StandardNormal);
            let mean = if alt { spec.mu } else { 0.0 };
            mean + shared + b * e
        })
        .collect();
    let pvalues = z.iter().map(|&x| two_sided_p(x)).collect();
    Replicate { z, pvalues, is_alt }
}

/// A procedure with everything that does not depend on the data
/// precomputed.
enum Prepared {
    Fixed(Vec<f64>),
    TwoStage {
        k: u64,
        n: u64,
        alpha: f64,
        lambda: f64,
        variant: Proc2Variant,
        tables: Vec<OnceLock<Vec<f64>>>,
    },
    Oracle {
        k: usize,
        alpha: f64,
        tables: Vec<OnceLock<Vec<f64>>>,
    },
    Threshold(f64),
}

impl Prepared {
    fn new(spec: &ProcedureSpec, n: usize) -> Result<Self> {
        Ok(match spec.method {
            Method::Proc2 { lambda, variant } => Prepared::TwoStage {
                k: spec.k as u64,
                n: n as u64,
                alpha: spec.alpha,
                lambda,
                variant,
                tables: (0..=n).map(|_| OnceLock::new()).collect(),
            },
            Method::Oracle { n0: None } => Prepared::Oracle {
                k: spec.k,
                alpha: spec.alpha,
                tables: (0..=n).map(|_| OnceLock::new()).collect(),
            },
            Method::SingleStep { t } => Prepared::Threshold(t),
            _ => Prepared::Fixed(critical_values(spec, n)?.expect("fixed family").into_values()),
        })
    }

    /// Number of rejections given the sorted p-values and the true null
    /// count of the replicate.
    fn rejections(&self, sorted: &[f64], n0: usize) -> usize {
        match self {
            Prepared::Fixed(cv) => step_up_count(sorted, cv),
            Prepared::Threshold(t) => sorted.partition_point(|&p| p <= *t),
            Prepared::TwoStage { k, n, alpha, lambda, variant, tables } => {
                let j = sorted.partition_point(|&p| p <= *lambda);
                if j == 0 {
                    return 0;
                }
                let cv = tables[j].get_or_init(|| {
                    let scale = alpha * (1.0 - lambda) / (*n as usize - j + 1) as f64;
                    (1..=j)
                        .map(|i| stage2_value(*k, *n, i as f64 * scale, *lambda, *variant))
                        .collect()
                });
                step_up_count(&sorted[..j], cv)
            }
            Prepared::Oracle { k, alpha, tables } => {
                // Fewer than k true nulls: no rejection set can reach k
                // false rejections.
                if n0 < *k {
                    return sorted.len();
                }
                let cv = tables[n0].get_or_init(|| {
                    let (kk, nn0) = (*k as u64, n0 as u64);
                    (1..=sorted.len())
                        .map(|i| g_tilde_inv_raw(kk, nn0, i.max(*k) as f64 * alpha / n0 as f64))
                        .collect()
                });
                step_up_count(sorted, cv)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct Moments {
    sum: f64,
    sum_sq: f64,
}

impl Moments {
    fn push(&mut self, x: f64) {
        self.sum += x;
        self.sum_sq += x * x;
    }

    fn merge(&mut self, o: &Moments) {
        self.sum += o.sum;
        self.sum_sq += o.sum_sq;
    }

    /// Mean and standard error `sd / √reps`.
    fn finish(&self, reps: usize) -> (f64, f64) {
        let r = reps as f64;
        let mean = self.sum / r;
        if reps < 2 {
            return (mean, 0.0);
        }
        let var = ((self.sum_sq - r * mean * mean) / (r - 1.0)).max(0.0);
        (mean, (var / r).sqrt())
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct Acc {
    power: Moments,
    kfdp: Moments,
    kfwe: Moments,
}

/// Estimates for one procedure.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProcedureReport {
    pub method: Method,
    pub avg_power: f64,
    pub se_power: f64,
    pub kfdr: f64,
    pub se_kfdr: f64,
    pub kfwer: f64,
    pub se_kfwer: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorRateReport {
    pub spec: SimulationSpec,
    pub procedures: Vec<ProcedureReport>,
}

impl ErrorRateReport {
    pub fn get(&self, label: &str) -> Option<&ProcedureReport> {
        self.procedures.iter().find(|p| p.method.label() == label)
    }
}

fn run_chunk(spec: &SimulationSpec, prepared: &[Prepared], reps: std::ops::Range<usize>) -> Vec<Acc> {
    let mut acc = vec![Acc::default(); prepared.len()];
    let mut order: Vec<usize> = (0..spec.n).collect();
    let mut sorted = vec![0.0; spec.n];
    for rep in reps {
        let r = gen_replicate(spec, rep as u64);
        order.sort_unstable_by(|&a, &b| r.pvalues[a].total_cmp(&r.pvalues[b]).then(a.cmp(&b)));
        for (s, &i) in sorted.iter_mut().zip(&order) {
            *s = r.pvalues[i];
        }
        let n1 = r.is_alt.iter().filter(|&&a| a).count();
        let n0 = spec.n - n1;
        for (p, a) in prepared.iter().zip(acc.iter_mut()) {
            let rejected = p.rejections(&sorted, n0);
            let s = order[..rejected].iter().filter(|&&i| r.is_alt[i]).count();
            let v = rejected - s;
            let kfwe = v >= spec.k;
            a.power.push(s as f64 / n1.max(1) as f64);
            a.kfdp.push(if kfwe { v as f64 / rejected as f64 } else { 0.0 });
            a.kfwe.push(kfwe as u8 as f64);
        }
    }
    acc
}

/// Monte Carlo estimates for every procedure in `spec`.
pub fn run_simulation(spec: &SimulationSpec) -> Result<ErrorRateReport> {
    spec.validate()?;
    let prepared = spec
        .procedures
        .iter()
        .map(|m| Prepared::new(&spec.procedure(*m), spec.n))
        .collect::<Result<Vec<_>>>()?;
    let chunks: Vec<Vec<Acc>> = (0..spec.reps.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| run_chunk(spec, &prepared, c * CHUNK..((c + 1) * CHUNK).min(spec.reps)))
        .collect();
    let mut total = vec![Acc::default(); prepared.len()];
    for chunk in &chunks {
        for (t, a) in total.iter_mut().zip(chunk) {
            t.power.merge(&a.power);
            t.kfdp.merge(&a.kfdp);
            t.kfwe.merge(&a.kfwe);
        }
    }
    let procedures = spec
        .procedures
        .iter()
        .zip(&total)
        .map(|(m, a)| {
            let (avg_power, se_power) = a.power.finish(spec.reps);
            let (kfdr, se_kfdr) = a.kfdp.finish(spec.reps);
            let (kfwer, se_kfwer) = a.kfwe.finish(spec.reps);
            ProcedureReport { method: *m, avg_power, se_power, kfdr, se_kfdr, kfwer, se_kfwer }
        })
        .collect();
    log::debug!("simulated {} reps of n = {}", spec.reps, spec.n);
    Ok(ErrorRateReport { spec: spec.clone(), procedures })
}

/// One (spec, procedure) line of a sweep. `n1` is empty for the mixture
/// design.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub procedure: String,
    pub n: usize,
    pub n1: Option<usize>,
    pub k: usize,
    pub alpha: f64,
    pub lambda: Option<f64>,
    pub rho: f64,
    pub reps: usize,
    pub avg_power: f64,
    pub se_power: f64,
    pub kfdr: f64,
    pub se_kfdr: f64,
    pub kfwer: f64,
    pub se_kfwer: f64,
    pub seed: u64,
}

impl SweepRow {
    fn rows(report: &ErrorRateReport) -> impl Iterator<Item = SweepRow> + '_ {
        let s = &report.spec;
        report.procedures.iter().map(move |p| SweepRow {
            procedure: p.method.label().to_string(),
            n: s.n,
            n1: s.n1(),
            k: s.k,
            alpha: s.alpha,
            lambda: p.method.lambda(),
            rho: s.rho,
            reps: s.reps,
            avg_power: p.avg_power,
            se_power: p.se_power,
            kfdr: p.kfdr,
            se_kfdr: p.se_kfdr,
            kfwer: p.kfwer,
            se_kfwer: p.se_kfwer,
            seed: s.seed,
        })
    }
}

/// Runs every spec and flattens the reports into rows.
pub fn sweep(specs: &[SimulationSpec]) -> Result<Vec<SweepRow>> {
    if specs.is_empty() {
        return Err(domain!("empty sweep"));
    }
    let mut rows = Vec::new();
    for s in specs {
        rows.extend(SweepRow::rows(&run_simulation(s)?));
    }
    Ok(rows)
}
