//! The stepup rejection rule and the two-stage adaptive procedure.

use std::cmp::Ordering;

use serde::Serialize;

use crate::critical::{
    check_alpha, check_lambda, cv_bh, cv_gen_hochberg, cv_oracle, cv_proc1, cv_proc2_stage2,
    cv_sarkar_kfdr, cv_sarkar_kfwer, CriticalValues, Method, Proc2Variant, ProcedureSpec,
};
use crate::error::{domain, input, Result};

/// Identified p-values with a cached ascending view.
///
/// Ties are ordered by id so the sorted view does not depend on the input
/// order.
#[derive(Debug, Clone)]
pub struct PValueSet {
    ids: Vec<String>,
    values: Vec<f64>,
    order: Vec<usize>,
}

impl PValueSet {
    pub fn new(entries: Vec<(String, f64)>) -> Result<Self> {
        let (ids, values): (Vec<_>, Vec<_>) = entries.into_iter().unzip();
        for (id, &p) in ids.iter().zip(&values) {
            if p.is_nan() {
                return Err(input!("p-value for {id} is NaN"));
            }
            if !(0.0..=1.0).contains(&p) {
                return Err(input!("p-value {p} for {id} outside [0, 1]"));
            }
        }
        let mut order: Vec<usize> = (0..values.len()).collect();
        order.sort_by(|&a, &b| {
            values[a]
                .partial_cmp(&values[b])
                .unwrap_or(Ordering::Equal)
                .then_with(|| ids[a].cmp(&ids[b]))
        });
        Ok(Self { ids, values, order })
    }

    /// Values identified by their 1-based position.
    pub fn from_values(values: &[f64]) -> Result<Self> {
        Self::new(
            values
                .iter()
                .enumerate()
                .map(|(i, &p)| ((i + 1).to_string(), p))
                .collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Permutation giving `p_{1:n} ≤ … ≤ p_{n:n}`.
    pub fn sorted_indices(&self) -> &[usize] {
        &self.order
    }

    pub fn sorted_values(&self) -> Vec<f64> {
        self.order.iter().map(|&i| self.values[i]).collect()
    }

    /// `R_n(t) = #{i : p_i ≤ t}`.
    pub fn count_at_most(&self, t: f64) -> usize {
        self.order.partition_point(|&i| self.values[i] <= t)
    }

    fn prefix_ids(&self, l: usize) -> Vec<String> {
        self.order[..l].iter().map(|&i| self.ids[i].clone()).collect()
    }
}

/// Outcome of a procedure: the hypotheses with the `l_hat` smallest
/// p-values are rejected.
#[derive(Debug, Clone, Serialize)]
pub struct RejectionResult {
    pub l_hat: usize,
    pub rejected_ids: Vec<String>,
    /// Critical value at position `l_hat`, or 0 when nothing is rejected.
    pub threshold: f64,
    /// Number of p-values at or below λ (two-stage procedure only).
    pub stage1_j: Option<usize>,
    pub spec: Option<ProcedureSpec>,
}

/// `max{i : p_{i:n} ≤ cv[i-1]}`, or 0, over already sorted p-values.
pub(crate) fn step_up_count(sorted: &[f64], cv: &[f64]) -> usize {
    debug_assert_eq!(sorted.len(), cv.len());
    (0..sorted.len())
        .rev()
        .find(|&i| sorted[i] <= cv[i])
        .map_or(0, |i| i + 1)
}

fn result_from(pvals: &PValueSet, l_hat: usize, cv: &[f64]) -> RejectionResult {
    RejectionResult {
        l_hat,
        rejected_ids: pvals.prefix_ids(l_hat),
        threshold: if l_hat == 0 { 0.0 } else { cv[l_hat - 1] },
        stage1_j: None,
        spec: None,
    }
}

/// Generic stepup rule. Comparison is `p ≤ α_i`.
pub fn stepup(pvals: &PValueSet, cv: &CriticalValues) -> Result<RejectionResult> {
    if pvals.len() != cv.len() {
        return Err(domain!(
            "{} p-values but {} critical values",
            pvals.len(),
            cv.len()
        ));
    }
    let sorted = pvals.sorted_values();
    let l_hat = step_up_count(&sorted, cv.values());
    Ok(result_from(pvals, l_hat, cv.values()))
}

/// Two-stage adaptive procedure.
///
/// Stage one counts `j = #{p ≤ λ}`; if `j = 0` nothing is rejected. Stage
/// two runs the stepup rule over the `j` smallest p-values against
/// [`cv_proc2_stage2`].
pub fn proc2(
    pvals: &PValueSet,
    k: usize,
    alpha: f64,
    lambda: f64,
    variant: Proc2Variant,
) -> Result<RejectionResult> {
    check_lambda(lambda)?;
    check_alpha(alpha)?;
    let n = pvals.len();
    if n == 0 {
        return Err(domain!("empty p-value set"));
    }
    if k == 0 || k > n {
        return Err(domain!("order k = {k} must satisfy 1 <= k <= n = {n}"));
    }
    let j = pvals.count_at_most(lambda);
    if j == 0 {
        return Ok(RejectionResult {
            l_hat: 0,
            rejected_ids: Vec::new(),
            threshold: 0.0,
            stage1_j: Some(0),
            spec: None,
        });
    }
    let cv = cv_proc2_stage2(n, k, alpha, lambda, j, variant)?;
    let sorted = pvals.sorted_values();
    let l_hat = step_up_count(&sorted[..j], cv.values());
    Ok(RejectionResult {
        stage1_j: Some(j),
        ..result_from(pvals, l_hat, cv.values())
    })
}

/// Critical values for every non-adaptive family.
pub fn critical_values(spec: &ProcedureSpec, n: usize) -> Result<Option<CriticalValues>> {
    let (k, alpha) = (spec.k, spec.alpha);
    let cv = match spec.method {
        Method::Bh => cv_bh(n, alpha)?,
        Method::Proc1 => cv_proc1(n, k, alpha)?,
        Method::GenHochberg => cv_gen_hochberg(n, k, alpha)?,
        Method::SarkarKfwer => cv_sarkar_kfwer(n, k, alpha)?,
        Method::SarkarKfdr => cv_sarkar_kfdr(n, k, alpha)?,
        Method::Oracle { n0: Some(n0) } => cv_oracle(n, k, alpha, n0)?,
        Method::Oracle { n0: None } => {
            return Err(domain!("oracle procedure requires the true null count n0"))
        }
        Method::Proc2 { .. } | Method::SingleStep { .. } => return Ok(None),
    };
    Ok(Some(cv))
}

/// Run any procedure on a p-value set.
pub fn run_procedure(pvals: &PValueSet, spec: &ProcedureSpec) -> Result<RejectionResult> {
    spec.validate()?;
    if pvals.is_empty() {
        return Err(domain!("empty p-value set"));
    }
    let mut result = match spec.method {
        Method::Proc2 { lambda, variant } => proc2(pvals, spec.k, spec.alpha, lambda, variant)?,
        Method::SingleStep { t } => {
            let l_hat = pvals.count_at_most(t);
            RejectionResult {
                l_hat,
                rejected_ids: pvals.prefix_ids(l_hat),
                threshold: if l_hat == 0 { 0.0 } else { t },
                stage1_j: None,
                spec: None,
            }
        }
        _ => {
            let cv = critical_values(spec, pvals.len())?.expect("fixed family");
            stepup(pvals, &cv)?
        }
    };
    result.spec = Some(*spec);
    Ok(result)
}
