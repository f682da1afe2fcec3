use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn kfdr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kfdr")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn adjust_all_ones_rejects_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let f = write(dir.path(), "p.txt", "1.0\n1.0\n1.0\n1.0\n");
    for m in ["bh", "proc1", "proc2", "gen-hochberg", "sarkar-kfdr"] {
        let o = kfdr(&["adjust", &f, "--method", m, "--k", "2"]);
        assert!(o.status.success(), "{m}: {}", stderr(&o));
        let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
        assert_eq!(v["l_hat"], 0);
        assert_eq!(v["control_proven"], true);
    }
    let o = kfdr(&["adjust", &f, "--method", "proc2-capped", "--k", "2"]);
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["control_proven"], false);
}

#[test]
fn adjust_reports_bad_line() {
    let dir = tempfile::tempdir().unwrap();
    let f = write(dir.path(), "p.txt", "0.01\n1.5\n0.3\n");
    let o = kfdr(&["adjust", &f]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 2"), "{}", stderr(&o));
    let f = write(dir.path(), "q.txt", "0.01\nabc\n");
    assert_eq!(kfdr(&["adjust", &f]).status.code(), Some(2));
    assert_eq!(kfdr(&["adjust", "/no/such/file"]).status.code(), Some(2));
}

#[test]
fn adjust_k1_proc1_equals_bh() {
    let dir = tempfile::tempdir().unwrap();
    let f = write(dir.path(), "p.txt", "0.001\n0.008\n0.039\n0.041\n0.042\n0.06\n0.074\n0.205\n0.212\n0.216\n");
    let get = |m: &str| {
        let o = kfdr(&["adjust", &f, "--method", m, "--k", "1", "--alpha", "0.25"]);
        assert!(o.status.success());
        let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
        (v["l_hat"].clone(), v["rejected_ids"].clone(), v["threshold"].clone())
    };
    let bh = get("bh");
    assert_eq!(bh, get("proc1"));
    assert!(bh.0.as_u64().unwrap() > 0);
}

#[test]
fn adjust_csv_column() {
    let dir = tempfile::tempdir().unwrap();
    let f = write(dir.path(), "p.csv", "gene,pval\na,0.001\nb,0.9\nc,0.002\n");
    let o = kfdr(&["adjust", &f, "--column", "pval", "--method", "bh", "--format", "csv"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(stdout(&o), "id,p,rejected\n1,0.001,true\n2,0.9,false\n3,0.002,true\n");
    let f = write(dir.path(), "bad.csv", "gene,pval\na,0.001\nb,-1\n");
    let o = kfdr(&["adjust", &f, "--column", "pval"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 3"), "{}", stderr(&o));
    assert_eq!(kfdr(&["adjust", &f, "--column", "nope"]).status.code(), Some(2));
}

#[test]
fn constants_table_shape_and_dominance() {
    let o = kfdr(&["constants", "--n", "500", "--k", "8", "--alpha", "0.05"]);
    assert!(o.status.success());
    let text = stdout(&o);
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "i,proc1,gen-hochberg,sarkar-kfwer");
    let rows: Vec<Vec<f64>> =
        lines.map(|l| l.split(',').map(|x| x.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), 500);
    for r in &rows[7..] {
        assert!(r[1] >= r[2], "i = {}", r[0]);
    }
    assert_eq!(kfdr(&["constants", "--n", "0"]).status.code(), Some(2));
    assert_eq!(kfdr(&["constants", "--n", "5", "--k", "9"]).status.code(), Some(2));
    assert_eq!(kfdr(&["constants", "--n", "5", "--families", "nope"]).status.code(), Some(2));
}

#[test]
fn mixture_grid_reductions() {
    let o = kfdr(&["mixture", "--n", "5,50", "--k", "1,3", "--pi0", "0.5,0.9", "--t", "0.01,0.1"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let mut rdr = csv::Reader::from_reader(o.stdout.as_slice());
    let header: Vec<String> = rdr.headers().unwrap().iter().map(String::from).collect();
    assert_eq!(header, ["n", "k", "pi0", "t", "kfdr_exact", "fdr_24", "fdr_25", "bound_rhs", "kfwer"]);
    let mut count = 0;
    for rec in rdr.records() {
        let v: Vec<f64> = rec.unwrap().iter().map(|x| x.parse().unwrap()).collect();
        if v[1] == 1.0 {
            assert!((v[5] - v[6]).abs() < 1e-10 && (v[4] - v[5]).abs() < 1e-10);
        }
        assert!(v[7] >= v[4] - 1e-12);
        count += 1;
    }
    assert_eq!(count, 16);
    assert_eq!(kfdr(&["mixture", "--n", "5,x", "--k", "1", "--pi0", "0.5", "--t", "0.1"]).status.code(), Some(2));
    assert_eq!(kfdr(&["mixture", "--n", "5", "--k", "1", "--pi0", "1.5", "--t", "0.1"]).status.code(), Some(2));
}

#[test]
fn mixture_table_alternative() {
    let dir = tempfile::tempdir().unwrap();
    let f = write(dir.path(), "alt.csv", "u,F1\n0.01,0.4\n0.1,0.8\n");
    let o = kfdr(&["mixture", "--n", "10", "--k", "2", "--pi0", "0.8", "--t", "0.05", "--alt-table", &f]);
    assert!(o.status.success(), "{}", stderr(&o));
    let f = write(dir.path(), "bad.csv", "0.1,0.8\n0.2,0.3\n");
    let o = kfdr(&["mixture", "--n", "10", "--k", "2", "--pi0", "0.8", "--t", "0.05", "--alt-table", &f]);
    assert_eq!(o.status.code(), Some(2));
}

const SPEC: &str = r#"{"runs": [
  {"n": 50, "n1": 10, "k": 2, "reps": 200, "procedures": [{"method": "proc1"}, {"method": "proc2", "lambda": 0.5}]},
  {"n": 50, "pi0": 0.8, "k": 2, "reps": 200, "rho": 0.2, "procedures": [{"method": "bh"}, {"method": "oracle"}]}
]}"#;

#[test]
fn simulate_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let f = write(dir.path(), "spec.json", SPEC);
    let a = kfdr(&["simulate", &f, "--seed", "17"]);
    assert!(a.status.success(), "{}", stderr(&a));
    let b = kfdr(&["simulate", &f, "--seed", "17"]);
    assert_eq!(a.stdout, b.stdout);
    let text = stdout(&a);
    assert!(text.starts_with(
        "procedure,n,n1,k,alpha,lambda,rho,reps,avg_power,se_power,kfdr,se_kfdr,kfwer,se_kfwer,seed\n"
    ));
    assert_eq!(text.lines().count(), 5);
    let c = kfdr(&["simulate", &f, "--seed", "18"]);
    assert_ne!(a.stdout, c.stdout);
}

#[test]
fn simulate_toml_and_errors() {
    let dir = tempfile::tempdir().unwrap();
    let f = write(
        dir.path(),
        "spec.toml",
        "n = 20\nn1 = 5\nk = 2\nreps = 50\n[[procedures]]\nmethod = \"gen-hochberg\"\n",
    );
    let o = kfdr(&["simulate", &f, "--seed", "1"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let o = kfdr(&["simulate", &f]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("--seed"));
    let empty = write(dir.path(), "e.json", r#"{"n": 20, "n1": 5, "k": 2, "procedures": []}"#);
    assert_eq!(kfdr(&["simulate", &empty, "--seed", "1"]).status.code(), Some(2));
}

#[test]
fn analyze_fixture_matches_golden() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("counts.csv");
    let genes = dir.path().join("genes.json");
    let matrix = fixtures().join("six_samples.tsv");
    let o = kfdr(&[
        "analyze",
        matrix.to_str().unwrap(),
        "--exhaustive",
        "--alpha",
        "0.12",
        "--lambda",
        "0.5",
        "--k",
        "1,2,3",
        "--output",
        out.to_str().unwrap(),
        "--per-gene",
        genes.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let golden = std::fs::read_to_string(fixtures().join("six_samples.counts.csv")).unwrap();
    assert_eq!(std::fs::read_to_string(&out).unwrap(), golden);
    let g: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&genes).unwrap()).unwrap();
    assert_eq!(g.as_array().unwrap().len(), 23);
    assert_eq!(g[0]["rejected"]["proc1"].as_array().unwrap().len(), 3);
}

#[test]
fn analyze_failure_leaves_no_output() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("counts.csv");
    let matrix = fixtures().join("six_samples.tsv");
    let o = kfdr(&["analyze", matrix.to_str().unwrap(), "--k", "", "--output", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!out.exists());
    let o = kfdr(&["analyze", matrix.to_str().unwrap(), "--groups", "A", "--output", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!out.exists());
}

#[test]
fn unknown_flag_is_usage_error() {
    assert_eq!(kfdr(&["constants", "--n", "5", "--bogus"]).status.code(), Some(2));
}
