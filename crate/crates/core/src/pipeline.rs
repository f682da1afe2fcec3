//! Two-group gene-expression workflow: read an expression matrix, drop
//! genes with extreme ratios, log-transform, compute two-sample t
//! statistics and permutation p-values, and count rejections for a panel
//! of procedures over several `k`.

use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::critical::{Method, Proc2Variant, ProcedureSpec};
use crate::error::{input, Error, Result};
use crate::stepup::{run_procedure, PValueSet};

/// Exhaustive relabeling is refused beyond this many assignments.
pub const MAX_EXHAUSTIVE: u64 = 1_000_000;

/// Relative slack for `|t*| ≥ |t|`, so that relabelings giving the same
/// statistic up to rounding (the identity, or the two groups swapped when
/// their sizes agree) always count as exceedances.
const TIE_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Group {
    A,
    B,
    Excluded,
}

/// Which metadata labels mark the two compared groups; any other label
/// marks the sample as excluded.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupLabels {
    pub a: String,
    pub b: String,
}

impl Default for GroupLabels {
    fn default() -> Self {
        Self { a: "A".into(), b: "B".into() }
    }
}

impl GroupLabels {
    /// Parses `"A,B"`.
    pub fn parse(s: &str) -> Result<Self> {
        match s.split(',').map(str::trim).collect::<Vec<_>>()[..] {
            [a, b] if !a.is_empty() && !b.is_empty() && a != b => {
                Ok(Self { a: a.into(), b: b.into() })
            }
            _ => Err(input!("groups must be two distinct labels like \"A,B\", got {s:?}")),
        }
    }

    fn classify(&self, label: &str) -> Group {
        if label == self.a {
            Group::A
        } else if label == self.b {
            Group::B
        } else {
            Group::Excluded
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExpressionMatrix {
    pub gene_ids: Vec<String>,
    pub sample_ids: Vec<String>,
    pub groups: Vec<Group>,
    /// One row per gene, one column per sample.
    pub values: Vec<Vec<f64>>,
}

impl ExpressionMatrix {
    pub fn new(
        gene_ids: Vec<String>,
        sample_ids: Vec<String>,
        groups: Vec<Group>,
        values: Vec<Vec<f64>>,
    ) -> Result<Self> {
        if groups.len() != sample_ids.len() {
            return Err(input!("{} samples but {} group labels", sample_ids.len(), groups.len()));
        }
        if values.len() != gene_ids.len() {
            return Err(input!("{} gene ids but {} rows", gene_ids.len(), values.len()));
        }
        for (g, row) in gene_ids.iter().zip(&values) {
            if row.len() != sample_ids.len() {
                return Err(input!(
                    "gene {g}: {} values for {} samples",
                    row.len(),
                    sample_ids.len()
                ));
            }
        }
        Ok(Self { gene_ids, sample_ids, groups, values })
    }

    /// Reads a delimited file: a header of sample ids, a row of group
    /// labels, then `gene_id, value...` rows. `.csv` files are
    /// comma-separated, anything else tab-separated.
    pub fn read(path: &Path, labels: &GroupLabels) -> Result<Self> {
        let delim = match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("csv") => b',',
            _ => b'\t',
        };
        let file = std::fs::File::open(path)
            .map_err(|e| input!("cannot open {}: {e}", path.display()))?;
        Self::from_reader(file, delim, labels)
    }

    pub fn from_reader<R: Read>(reader: R, delimiter: u8, labels: &GroupLabels) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .delimiter(delimiter)
            .has_headers(false)
            .flexible(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let mut records = rdr.records().enumerate();
        let mut next = |what: &str| -> Result<Option<(usize, csv::StringRecord)>> {
            match records.next() {
                None => Ok(None),
                Some((i, Ok(r))) => Ok(Some((i + 1, r))),
                Some((i, Err(e))) => Err(input!("line {}: {what}: {e}", i + 1)),
            }
        };
        let (_, header) = next("header")?.ok_or_else(|| input!("empty expression file"))?;
        let sample_ids: Vec<String> = header.iter().skip(1).map(String::from).collect();
        if sample_ids.is_empty() {
            return Err(input!("line 1: no sample columns"));
        }
        let (line, meta) = next("group labels")?.ok_or_else(|| input!("missing group-label row"))?;
        if meta.len() != sample_ids.len() + 1 {
            return Err(input!(
                "line {line}: {} group labels for {} samples",
                meta.len().saturating_sub(1),
                sample_ids.len()
            ));
        }
        let groups = meta.iter().skip(1).map(|l| labels.classify(l)).collect();

        let mut gene_ids = Vec::new();
        let mut values = Vec::new();
        while let Some((line, rec)) = next("gene row")? {
            if rec.iter().all(str::is_empty) {
                continue;
            }
            if rec.len() != sample_ids.len() + 1 {
                return Err(input!(
                    "line {line}: expected {} fields, found {}",
                    sample_ids.len() + 1,
                    rec.len()
                ));
            }
            let id = rec[0].to_string();
            let row = rec
                .iter()
                .skip(1)
                .enumerate()
                .map(|(j, s)| {
                    let v: f64 = s.parse().map_err(|_| {
                        input!("line {line}: gene {id}, sample {}: not a number: {s:?}", sample_ids[j])
                    })?;
                    if v.is_finite() {
                        Ok(v)
                    } else {
                        Err(input!("line {line}: gene {id}: missing or non-finite value {s:?}"))
                    }
                })
                .collect::<Result<Vec<f64>>>()?;
            gene_ids.push(id);
            values.push(row);
        }
        Self::new(gene_ids, sample_ids, groups, values)
    }

    pub fn n_genes(&self) -> usize {
        self.gene_ids.len()
    }

    fn group_size(&self, g: Group) -> usize {
        self.groups.iter().filter(|&&x| x == g).count()
    }

    fn included(&self) -> Vec<usize> {
        (0..self.groups.len()).filter(|&j| self.groups[j] != Group::Excluded).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Preprocessed {
    pub matrix: ExpressionMatrix,
    pub dropped: usize,
}

/// Keeps only the compared samples, drops every gene with a ratio above
/// `ratio_cap` in any of them, and takes `log₂` of what is left.
pub fn preprocess(m: &ExpressionMatrix, ratio_cap: f64) -> Result<Preprocessed> {
    let cols = m.included();
    let mut gene_ids = Vec::new();
    let mut values = Vec::new();
    let mut dropped = 0;
    for (id, row) in m.gene_ids.iter().zip(&m.values) {
        let kept: Vec<f64> = cols.iter().map(|&j| row[j]).collect();
        if let Some(v) = kept.iter().find(|&&v| v <= 0.0) {
            return Err(input!("gene {id}: nonpositive ratio {v} cannot be log-transformed"));
        }
        if kept.iter().any(|&v| v > ratio_cap) {
            dropped += 1;
            continue;
        }
        gene_ids.push(id.clone());
        values.push(kept.into_iter().map(f64::log2).collect());
    }
    log::info!("preprocess: kept {} genes, dropped {dropped}", gene_ids.len());
    let matrix = ExpressionMatrix {
        gene_ids,
        sample_ids: cols.iter().map(|&j| m.sample_ids[j].clone()).collect(),
        groups: cols.iter().map(|&j| m.groups[j]).collect(),
        values,
    };
    Ok(Preprocessed { matrix, dropped })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TStatistic {
    /// Equal-variance statistic with pooled variance.
    #[default]
    Pooled,
    /// Unequal-variance statistic.
    Welch,
}

/// `mean(A) - mean(B)` over its standard error, for one gene. Samples
/// with `mask[j] == None` are ignored. Zero variance gives `None`.
fn t_stat(row: &[f64], in_a: &[Option<bool>], form: TStatistic) -> Option<f64> {
    let (mut na, mut nb, mut sa, mut sb) = (0.0, 0.0, 0.0, 0.0);
    for (x, g) in row.iter().zip(in_a) {
        match g {
            Some(true) => {
                na += 1.0;
                sa += x;
            }
            Some(false) => {
                nb += 1.0;
                sb += x;
            }
            None => {}
        }
    }
    let (ma, mb) = (sa / na, sb / nb);
    let (mut qa, mut qb) = (0.0, 0.0);
    for (x, g) in row.iter().zip(in_a) {
        match g {
            Some(true) => qa += (x - ma) * (x - ma),
            Some(false) => qb += (x - mb) * (x - mb),
            None => {}
        }
    }
    let se = match form {
        TStatistic::Pooled => ((qa + qb) / (na + nb - 2.0) * (1.0 / na + 1.0 / nb)).sqrt(),
        TStatistic::Welch => (qa / (na - 1.0) / na + qb / (nb - 1.0) / nb).sqrt(),
    };
    if se > 0.0 {
        Some((ma - mb) / se)
    } else {
        None
    }
}

fn mask_of(groups: &[Group]) -> Vec<Option<bool>> {
    groups
        .iter()
        .map(|g| match g {
            Group::A => Some(true),
            Group::B => Some(false),
            Group::Excluded => None,
        })
        .collect()
}

fn check_groups(m: &ExpressionMatrix) -> Result<()> {
    let (a, b) = (m.group_size(Group::A), m.group_size(Group::B));
    if a < 2 || b < 2 {
        return Err(input!("each group needs at least 2 samples (A has {a}, B has {b})"));
    }
    Ok(())
}

fn all_t(m: &ExpressionMatrix, mask: &[Option<bool>], form: TStatistic) -> Vec<Option<f64>> {
    m.values.iter().map(|row| t_stat(row, mask, form)).collect()
}

/// Per-gene t statistics, group A minus group B. Genes with zero variance
/// get `t = 0` and a warning.
pub fn two_sample_t(m: &ExpressionMatrix, form: TStatistic) -> Result<Vec<f64>> {
    check_groups(m)?;
    Ok(all_t(m, &mask_of(&m.groups), form)
        .into_iter()
        .zip(&m.gene_ids)
        .map(|(t, id)| {
            t.unwrap_or_else(|| {
                log::warn!("gene {id}: zero variance, t set to 0");
                0.0
            })
        })
        .collect())
}

/// How the null relabelings are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relabeling {
    /// `b` uniform draws with replacement; draw `i` uses ChaCha stream `i`.
    Random { b: usize, seed: u64 },
    /// Every assignment of the group sizes, the observed one included.
    Exhaustive,
}

/// What each observed statistic is compared against.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PermutationMode {
    /// The null statistics of all genes together.
    #[default]
    Pooled,
    /// Only the gene's own null statistics.
    PerGene,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GeneTestResult {
    pub gene_id: String,
    pub t_stat: f64,
    pub p_perm: f64,
}

/// All `r`-subsets of `0..n` in lexicographic order.
fn combinations(n: usize, r: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut idx: Vec<usize> = (0..r).collect();
    loop {
        out.push(idx.clone());
        let Some(i) = (0..r).rev().find(|&i| idx[i] != i + n - r) else {
            return out;
        };
        idx[i] += 1;
        for j in i + 1..r {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

fn binomial(n: usize, r: usize) -> u64 {
    let r = r.min(n - r);
    (0..r).fold(1u64, |acc, i| acc.saturating_mul((n - i) as u64) / (i as u64 + 1))
}

fn exceeds(null_abs: f64, obs_abs: f64) -> bool {
    null_abs >= obs_abs - TIE_TOL * obs_abs.max(1.0)
}

/// Two-sample t statistics and permutation p-values,
/// `#{|t*| ≥ |t|} / #{null statistics}`.
pub fn permutation_pvalues(
    m: &ExpressionMatrix,
    relabeling: Relabeling,
    mode: PermutationMode,
    form: TStatistic,
) -> Result<Vec<GeneTestResult>> {
    check_groups(m)?;
    let observed = two_sample_t(m, form)?;
    let cols = m.included();
    let n_a = m.group_size(Group::A);

    let assignments: Vec<Vec<usize>> = match relabeling {
        Relabeling::Random { b, seed } => {
            if b == 0 {
                return Err(input!("need at least one permutation"));
            }
            (0..b)
                .map(|i| {
                    let mut rng = ChaCha8Rng::seed_from_u64(seed);
                    rng.set_stream(i as u64);
                    let mut c = cols.clone();
                    c.shuffle(&mut rng);
                    c.truncate(n_a);
                    c
                })
                .collect()
        }
        Relabeling::Exhaustive => {
            let total = binomial(cols.len(), n_a);
            if total > MAX_EXHAUSTIVE {
                return Err(input!("{total} relabelings exceed the exhaustive limit {MAX_EXHAUSTIVE}"));
            }
            combinations(cols.len(), n_a)
                .into_iter()
                .map(|s| s.into_iter().map(|i| cols[i]).collect())
                .collect()
        }
    };

    let nulls: Vec<Vec<f64>> = assignments
        .par_iter()
        .map(|a_cols| {
            let mut mask: Vec<Option<bool>> =
                m.groups.iter().map(|g| (*g != Group::Excluded).then_some(false)).collect();
            for &j in a_cols {
                mask[j] = Some(true);
            }
            all_t(m, &mask, form).into_iter().map(|t| t.unwrap_or(0.0).abs()).collect()
        })
        .collect();

    let b = nulls.len() as f64;
    let p: Vec<f64> = match mode {
        PermutationMode::PerGene => (0..m.n_genes())
            .map(|g| {
                let obs = observed[g].abs();
                nulls.iter().filter(|row| exceeds(row[g], obs)).count() as f64 / b
            })
            .collect(),
        PermutationMode::Pooled => {
            let mut pool: Vec<f64> = nulls.into_iter().flatten().collect();
            pool.sort_unstable_by(f64::total_cmp);
            let total = pool.len() as f64;
            observed
                .iter()
                .map(|t| {
                    let obs = t.abs();
                    let below = pool.partition_point(|&x| !exceeds(x, obs));
                    (pool.len() - below) as f64 / total
                })
                .collect()
        }
    };
    Ok(m.gene_ids
        .iter()
        .zip(observed)
        .zip(p)
        .map(|((id, t), p)| GeneTestResult { gene_id: id.clone(), t_stat: t, p_perm: p })
        .collect())
}

/// The default panel: both new k-FDR procedures, Sarkar's k-FDR and
/// k-FWER procedures, and the generalized Hochberg procedure.
pub fn default_procedures(lambda: f64) -> Vec<Method> {
    vec![
        Method::Proc1,
        Method::Proc2 { lambda, variant: Proc2Variant::Scaled },
        Method::SarkarKfdr,
        Method::SarkarKfwer,
        Method::GenHochberg,
    ]
}

pub const DEFAULT_KS: [usize; 8] = [1, 3, 5, 8, 10, 15, 20, 30];

#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisConfig {
    pub ks: Vec<usize>,
    pub alpha: f64,
    pub procedures: Vec<Method>,
}

/// Rejection counts of one procedure, one per `k`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CountRow {
    pub procedure: String,
    pub counts: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GeneReport {
    pub id: String,
    pub t: f64,
    pub p: f64,
    /// Procedure label to one flag per `k`.
    pub rejected: BTreeMap<String, Vec<bool>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnalysisReport {
    pub ks: Vec<usize>,
    pub table: Vec<CountRow>,
    pub genes: Vec<GeneReport>,
}

/// Runs every procedure at every `k` on the permutation p-values.
pub fn analyze(results: &[GeneTestResult], config: &AnalysisConfig) -> Result<AnalysisReport> {
    if config.ks.is_empty() {
        return Err(input!("no values of k requested"));
    }
    if config.procedures.is_empty() {
        return Err(input!("no procedures requested"));
    }
    let n = results.len();
    if let Some(&k) = config.ks.iter().find(|&&k| k == 0 || k > n) {
        return Err(input!("k = {k} must satisfy 1 <= k <= {n} genes"));
    }
    let pvals = PValueSet::new(results.iter().map(|r| (r.gene_id.clone(), r.p_perm)).collect())?;
    let index: BTreeMap<&str, usize> =
        results.iter().enumerate().map(|(i, r)| (r.gene_id.as_str(), i)).collect();
    if index.len() != n {
        return Err(input!("duplicate gene ids"));
    }
    let mut flags: Vec<BTreeMap<String, Vec<bool>>> = vec![BTreeMap::new(); n];
    let mut table = Vec::new();
    for method in &config.procedures {
        let label = method.label().to_string();
        let mut counts = Vec::with_capacity(config.ks.len());
        for f in flags.iter_mut() {
            f.insert(label.clone(), vec![false; config.ks.len()]);
        }
        for (ki, &k) in config.ks.iter().enumerate() {
            let spec = ProcedureSpec::new(*method, k, config.alpha)?;
            let res = run_procedure(&pvals, &spec)?;
            for id in &res.rejected_ids {
                flags[index[id.as_str()]].get_mut(&label).unwrap()[ki] = true;
            }
            counts.push(res.l_hat);
        }
        table.push(CountRow { procedure: label, counts });
    }
    let genes = results
        .iter()
        .zip(flags)
        .map(|(r, rejected)| GeneReport { id: r.gene_id.clone(), t: r.t_stat, p: r.p_perm, rejected })
        .collect();
    Ok(AnalysisReport { ks: config.ks.clone(), table, genes })
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        input!("{e}")
    }
}
