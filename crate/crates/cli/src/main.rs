use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use kfdr_core::critical::{
    cv_bh, cv_gen_hochberg, cv_oracle, cv_proc1, cv_sarkar_kfdr, cv_sarkar_kfwer, CriticalValues,
};
use kfdr_core::mixture::{grid, Alternative, PiecewiseCdf};
use kfdr_core::pipeline::{
    analyze, permutation_pvalues, preprocess, AnalysisConfig, ExpressionMatrix, GroupLabels,
    PermutationMode, Relabeling, TStatistic, DEFAULT_KS,
};
use kfdr_core::sim::{sweep, SimulationSpec};
use kfdr_core::{run_procedure, Method, PValueSet, Proc2Variant, ProcedureSpec, RejectionResult};

/// Generalized FDR and k-FWER multiple testing.
#[derive(Parser)]
#[command(name = "kfdr", version)]
struct Cli {
    /// Log progress to stderr.
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a procedure on a list of p-values.
    Adjust(AdjustArgs),
    /// Print critical-value sequences.
    Constants(ConstantsArgs),
    /// Exact single-step error rates over a parameter grid.
    Mixture(MixtureArgs),
    /// Monte Carlo error rates and power from a run-spec file.
    Simulate(SimulateArgs),
    /// Two-group expression analysis with permutation p-values.
    Analyze(AnalyzeArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MethodName {
    Bh,
    Proc1,
    Proc2,
    Proc2Capped,
    GenHochberg,
    SarkarKfwer,
    SarkarKfdr,
    Oracle,
    SingleStep,
}

#[derive(Args)]
struct OutputArgs {
    /// Output format.
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// Write here instead of stdout. The file only appears on success.
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct SpecArgs {
    #[arg(long, value_enum, default_value = "proc1")]
    method: MethodName,
    #[arg(long, default_value_t = 1)]
    k: usize,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Stage-one tuning value for the two-stage procedures.
    #[arg(long, default_value_t = 0.5)]
    lambda: f64,
    /// True number of nulls for the oracle procedure.
    #[arg(long)]
    n0: Option<usize>,
    /// Fixed threshold for the single-step test.
    #[arg(long)]
    t: Option<f64>,
}

impl SpecArgs {
    fn spec(&self) -> Result<ProcedureSpec, CliError> {
        let method = match self.method {
            MethodName::Bh => Method::Bh,
            MethodName::Proc1 => Method::Proc1,
            MethodName::Proc2 => Method::Proc2 { lambda: self.lambda, variant: Proc2Variant::Scaled },
            MethodName::Proc2Capped => {
                Method::Proc2 { lambda: self.lambda, variant: Proc2Variant::Capped }
            }
            MethodName::GenHochberg => Method::GenHochberg,
            MethodName::SarkarKfwer => Method::SarkarKfwer,
            MethodName::SarkarKfdr => Method::SarkarKfdr,
            MethodName::Oracle => Method::Oracle {
                n0: Some(self.n0.ok_or_else(|| input("--method oracle needs --n0"))?),
            },
            MethodName::SingleStep => Method::SingleStep {
                t: self.t.ok_or_else(|| input("--method single-step needs --t"))?,
            },
        };
        Ok(ProcedureSpec::new(method, self.k, self.alpha)?)
    }
}

#[derive(Args)]
struct AdjustArgs {
    /// One p-value per line, or a CSV file when --column is given.
    file: PathBuf,
    /// Header name of the p-value column in a CSV file.
    #[arg(long)]
    column: Option<String>,
    #[command(flatten)]
    spec: SpecArgs,
    #[command(flatten)]
    out: OutputArgs,
}

#[derive(Args)]
struct ConstantsArgs {
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 1)]
    k: usize,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long)]
    n0: Option<usize>,
    /// Comma-separated families: bh, proc1, gen-hochberg, sarkar-kfwer,
    /// sarkar-kfdr, oracle.
    #[arg(long, default_value = "proc1,gen-hochberg,sarkar-kfwer")]
    families: String,
    #[command(flatten)]
    out: OutputArgs,
}

#[derive(Args)]
struct MixtureArgs {
    /// Comma-separated hypothesis counts.
    #[arg(long)]
    n: String,
    #[arg(long)]
    k: String,
    #[arg(long)]
    pi0: String,
    /// Comma-separated single-step thresholds.
    #[arg(long)]
    t: String,
    /// Effect size of the two-sided normal-shift alternative.
    #[arg(long, default_value_t = 2.0, conflicts_with = "alt_table")]
    mu: f64,
    /// File of `u,F1(u)` lines defining the alternative instead.
    #[arg(long)]
    alt_table: Option<PathBuf>,
    #[command(flatten)]
    out: OutputArgs,
}

#[derive(Args)]
struct SimulateArgs {
    /// JSON or TOML (by extension) run spec: one spec, or `runs = [...]`.
    spec: PathBuf,
    /// Master seed; overrides any seed in the file.
    #[arg(long)]
    seed: u64,
    #[command(flatten)]
    out: OutputArgs,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    Pooled,
    PerGene,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum TArg {
    Pooled,
    Welch,
}

#[derive(Args)]
struct AnalyzeArgs {
    /// Expression matrix (TSV, or CSV by extension).
    matrix: PathBuf,
    /// Labels of the two compared groups; other labels are excluded.
    #[arg(long, default_value = "A,B")]
    groups: String,
    /// Number of random relabelings.
    #[arg(long = "B", default_value_t = 1000)]
    b: usize,
    /// Use every relabeling instead of --B random ones.
    #[arg(long)]
    exhaustive: bool,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, value_enum, default_value = "pooled")]
    mode: ModeArg,
    #[arg(long, value_enum, default_value = "pooled")]
    t_stat: TArg,
    #[arg(long, default_value_t = 20.0)]
    ratio_cap: f64,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long, default_value_t = 0.9)]
    lambda: f64,
    /// Comma-separated values of k.
    #[arg(long)]
    k: Option<String>,
    /// Also write per-gene results (JSON) here.
    #[arg(long)]
    per_gene: Option<PathBuf>,
    #[command(flatten)]
    out: OutputArgs,
}

#[derive(Debug)]
enum CliError {
    Input(String),
    Internal(String),
}

fn input(msg: impl Into<String>) -> CliError {
    CliError::Input(msg.into())
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Input(m) | CliError::Internal(m) => f.write_str(m),
        }
    }
}

impl From<kfdr_core::Error> for CliError {
    fn from(e: kfdr_core::Error) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Internal(format!("csv: {e}"))
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Internal(format!("json: {e}"))
    }
}

fn read_text(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| input(format!("cannot read {}: {e}", path.display())))
}

/// Writes `bytes` to `path` via a temporary file in the same directory, so
/// a failed run never leaves a partial file behind.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let internal = |e: std::io::Error| CliError::Internal(format!("writing {}: {e}", path.display()));
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(internal)?;
    tmp.write_all(bytes).map_err(internal)?;
    tmp.persist(path).map_err(|e| internal(e.error))?;
    Ok(())
}

fn emit(out: &OutputArgs, bytes: Vec<u8>) -> Result<(), CliError> {
    match &out.output {
        Some(path) => write_atomic(path, &bytes),
        None => std::io::stdout()
            .write_all(&bytes)
            .map_err(|e| CliError::Internal(format!("stdout: {e}"))),
    }
}

fn to_json<T: serde::Serialize>(value: &T) -> Result<Vec<u8>, CliError> {
    let mut v = serde_json::to_vec_pretty(value)?;
    v.push(b'\n');
    Ok(v)
}

fn to_csv<T: serde::Serialize>(rows: &[T]) -> Result<Vec<u8>, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    w.into_inner().map_err(|e| CliError::Internal(e.to_string()))
}

fn parse_list<T: std::str::FromStr>(flag: &str, s: &str) -> Result<Vec<T>, CliError> {
    let v = s
        .split(',')
        .map(|x| x.trim().parse().map_err(|_| input(format!("--{flag}: cannot parse {x:?}"))))
        .collect::<Result<Vec<T>, _>>()?;
    if v.is_empty() {
        return Err(input(format!("--{flag}: empty list")));
    }
    Ok(v)
}

fn parse_probability(line: usize, s: &str) -> Result<f64, CliError> {
    let p: f64 = s
        .trim()
        .parse()
        .map_err(|_| input(format!("line {line}: not a number: {:?}", s.trim())))?;
    if !(0.0..=1.0).contains(&p) {
        return Err(input(format!("line {line}: p-value {p} outside [0, 1]")));
    }
    Ok(p)
}

fn read_pvalues(path: &Path, column: Option<&str>) -> Result<Vec<f64>, CliError> {
    let text = read_text(path)?;
    let Some(col) = column else {
        let mut out = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let t = line.trim();
            if t.is_empty() || t.starts_with('#') {
                continue;
            }
            out.push(parse_probability(i + 1, t)?);
        }
        return Ok(out);
    };
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let headers = rdr.headers().map_err(|e| input(format!("line 1: {e}")))?.clone();
    let idx = headers
        .iter()
        .position(|h| h == col)
        .ok_or_else(|| input(format!("line 1: no column named {col:?}")))?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| input(e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let field = rec.get(idx).ok_or_else(|| input(format!("line {line}: missing column {col:?}")))?;
        out.push(parse_probability(line, field)?);
    }
    Ok(out)
}

#[derive(serde::Serialize)]
struct AdjustJson<'a> {
    #[serde(flatten)]
    result: &'a RejectionResult,
    control_proven: bool,
}

#[derive(serde::Serialize)]
struct AdjustRow<'a> {
    id: &'a str,
    p: f64,
    rejected: bool,
}

fn cmd_adjust(a: &AdjustArgs) -> Result<(), CliError> {
    let spec = a.spec.spec()?;
    let p = read_pvalues(&a.file, a.column.as_deref())?;
    if p.is_empty() {
        return Err(input(format!("{}: no p-values", a.file.display())));
    }
    let set = PValueSet::from_values(&p)?;
    let result = run_procedure(&set, &spec)?;
    log::info!("{} rejected {} of {}", spec.method, result.l_hat, p.len());
    let control_proven = spec.control_proven();
    if !control_proven {
        log::warn!("k-FDR control of {} is not proven for k > 1", spec.method);
    }
    let bytes = match a.out.format.unwrap_or(Format::Json) {
        Format::Json => to_json(&AdjustJson { result: &result, control_proven })?,
        Format::Csv => {
            let rejected: std::collections::HashSet<&str> =
                result.rejected_ids.iter().map(String::as_str).collect();
            let rows: Vec<AdjustRow> = set
                .ids()
                .iter()
                .zip(set.values())
                .map(|(id, &p)| AdjustRow { id, p, rejected: rejected.contains(id.as_str()) })
                .collect();
            to_csv(&rows)?
        }
    };
    emit(&a.out, bytes)
}

fn cmd_constants(a: &ConstantsArgs) -> Result<(), CliError> {
    if a.n == 0 {
        return Err(input("--n must be positive"));
    }
    let mut cols: Vec<(String, CriticalValues)> = Vec::new();
    for fam in a.families.split(',').map(str::trim) {
        let cv = match fam {
            "bh" => cv_bh(a.n, a.alpha)?,
            "proc1" => cv_proc1(a.n, a.k, a.alpha)?,
            "gen-hochberg" => cv_gen_hochberg(a.n, a.k, a.alpha)?,
            "sarkar-kfwer" => cv_sarkar_kfwer(a.n, a.k, a.alpha)?,
            "sarkar-kfdr" => cv_sarkar_kfdr(a.n, a.k, a.alpha)?,
            "oracle" => {
                let n0 = a.n0.ok_or_else(|| input("family oracle needs --n0"))?;
                cv_oracle(a.n, a.k, a.alpha, n0)?
            }
            other => return Err(input(format!("--families: unknown family {other:?}"))),
        };
        cols.push((fam.to_string(), cv));
    }
    let bytes = match a.out.format.unwrap_or(Format::Csv) {
        Format::Json => {
            let map: serde_json::Map<String, serde_json::Value> = cols
                .iter()
                .map(|(name, cv)| (name.clone(), serde_json::json!(cv.values())))
                .collect();
            to_json(&map)?
        }
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            let mut header = vec!["i".to_string()];
            header.extend(cols.iter().map(|(n, _)| n.clone()));
            w.write_record(&header)?;
            for i in 0..a.n {
                let mut row = vec![(i + 1).to_string()];
                row.extend(cols.iter().map(|(_, cv)| cv.values()[i].to_string()));
                w.write_record(&row)?;
            }
            w.into_inner().map_err(|e| CliError::Internal(e.to_string()))?
        }
    };
    emit(&a.out, bytes)
}

fn read_alt_table(path: &Path) -> Result<Alternative, CliError> {
    let text = read_text(path)?;
    let mut pts = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let parsed: Option<(f64, f64)> = t
            .split_once(',')
            .and_then(|(u, f)| Some((u.trim().parse().ok()?, f.trim().parse().ok()?)));
        match parsed {
            Some(p) => pts.push(p),
            None if pts.is_empty() && i == 0 => {} // header
            None => return Err(input(format!("line {}: expected `u,F1(u)`, got {t:?}", i + 1))),
        }
    }
    Ok(Alternative::Table(PiecewiseCdf::new(&pts)?))
}

fn cmd_mixture(a: &MixtureArgs) -> Result<(), CliError> {
    let ns: Vec<usize> = parse_list("n", &a.n)?;
    let ks: Vec<usize> = parse_list("k", &a.k)?;
    let pi0s: Vec<f64> = parse_list("pi0", &a.pi0)?;
    let ts: Vec<f64> = parse_list("t", &a.t)?;
    let alt = match &a.alt_table {
        Some(p) => read_alt_table(p)?,
        None => Alternative::NormalShift { mu: a.mu },
    };
    let rows = grid(&ns, &ks, &pi0s, &ts, &alt)?;
    if rows.is_empty() {
        return Err(input("grid is empty: every k exceeds every n"));
    }
    let bytes = match a.out.format.unwrap_or(Format::Csv) {
        Format::Json => to_json(&rows)?,
        Format::Csv => to_csv(&rows)?,
    };
    emit(&a.out, bytes)
}

#[derive(Deserialize)]
#[serde(untagged)]
enum SpecFile {
    Many { runs: Vec<SimulationSpec> },
    One(SimulationSpec),
}

fn load_specs(path: &Path) -> Result<Vec<SimulationSpec>, CliError> {
    let text = read_text(path)?;
    let is_toml = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("toml"));
    let file: SpecFile = if is_toml {
        toml::from_str(&text).map_err(|e| input(format!("{}: {e}", path.display())))?
    } else {
        serde_json::from_str(&text).map_err(|e| input(format!("{}: {e}", path.display())))?
    };
    let specs = match file {
        SpecFile::Many { runs } => runs,
        SpecFile::One(s) => vec![s],
    };
    if specs.is_empty() {
        return Err(input(format!("{}: no runs", path.display())));
    }
    Ok(specs)
}

fn cmd_simulate(a: &SimulateArgs) -> Result<(), CliError> {
    let mut specs = load_specs(&a.spec)?;
    for (i, s) in specs.iter_mut().enumerate() {
        s.seed = a.seed;
        s.validate().map_err(|e| input(format!("run {}: {e}", i + 1)))?;
    }
    let rows = sweep(&specs)?;
    let bytes = match a.out.format.unwrap_or(Format::Csv) {
        Format::Json => to_json(&rows)?,
        Format::Csv => to_csv(&rows)?,
    };
    emit(&a.out, bytes)
}

fn cmd_analyze(a: &AnalyzeArgs) -> Result<(), CliError> {
    let labels = GroupLabels::parse(&a.groups)?;
    let ks = match &a.k {
        Some(s) => parse_list("k", s)?,
        None => DEFAULT_KS.to_vec(),
    };
    let raw = ExpressionMatrix::read(&a.matrix, &labels)?;
    let pre = preprocess(&raw, a.ratio_cap)?;
    log::info!("kept {} genes, dropped {}", pre.matrix.n_genes(), pre.dropped);
    let relabeling = if a.exhaustive {
        Relabeling::Exhaustive
    } else {
        Relabeling::Random { b: a.b, seed: a.seed }
    };
    let mode = match a.mode {
        ModeArg::Pooled => PermutationMode::Pooled,
        ModeArg::PerGene => PermutationMode::PerGene,
    };
    let form = match a.t_stat {
        TArg::Pooled => TStatistic::Pooled,
        TArg::Welch => TStatistic::Welch,
    };
    let results = permutation_pvalues(&pre.matrix, relabeling, mode, form)?;
    let config = AnalysisConfig {
        ks,
        alpha: a.alpha,
        procedures: kfdr_core::pipeline::default_procedures(a.lambda),
    };
    let report = analyze(&results, &config)?;
    let bytes = match a.out.format.unwrap_or(Format::Csv) {
        Format::Json => to_json(&serde_json::json!({
            "ks": report.ks,
            "table": report.table,
            "kept": pre.matrix.n_genes(),
            "dropped": pre.dropped,
        }))?,
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            let mut header = vec!["procedure".to_string()];
            header.extend(report.ks.iter().map(|k| format!("k={k}")));
            w.write_record(&header)?;
            for row in &report.table {
                let mut rec = vec![row.procedure.clone()];
                rec.extend(row.counts.iter().map(usize::to_string));
                w.write_record(&rec)?;
            }
            w.into_inner().map_err(|e| CliError::Internal(e.to_string()))?
        }
    };
    if let Some(path) = &a.per_gene {
        write_atomic(path, &to_json(&report.genes)?)?;
    }
    emit(&a.out, bytes)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    let level = if cli.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let result = match &cli.command {
        Command::Adjust(a) => cmd_adjust(a),
        Command::Constants(a) => cmd_constants(a),
        Command::Mixture(a) => cmd_mixture(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Analyze(a) => cmd_analyze(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Input(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(CliError::Internal(m)) => {
            eprintln!("internal error: {m}");
            ExitCode::from(1)
        }
    }
}
