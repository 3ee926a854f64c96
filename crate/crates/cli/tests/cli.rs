use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures").join(name)
}

fn qmg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qmg")).args(args).output().expect("spawn qmg")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn field(text: &str, key: &str) -> f64 {
    let start = text.find(key).unwrap_or_else(|| panic!("{key} missing in {text:?}")) + key.len();
    let rest = &text[start..];
    let end = rest.find(|c: char| c.is_whitespace()).unwrap_or(rest.len());
    rest[..end].parse().unwrap()
}

#[test]
fn graph_stats_for_h4() {
    let h4 = fixture("h4_jw.ham");
    let fc = qmg(&["graph", "--hamiltonian", h4.to_str().unwrap(), "--complement"]);
    assert!(fc.status.success());
    let fc = stdout(&fc);
    assert_eq!(field(&fc, "nodes="), 184.0);
    assert!((field(&fc, "mean_degree=") - 78.43).abs() < 0.01);
    assert_eq!(field(&fc, "max_degree="), 84.0);

    let qwc = stdout(&qmg(&["graph", "--hamiltonian", h4.to_str().unwrap(), "--complement", "--scheme", "qwc"]));
    assert!(field(&qwc, "mean_degree=") > field(&fc, "mean_degree="));
}

#[test]
fn graph_edge_list_is_written() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("g.json");
    let o = qmg(&["graph", "--hamiltonian", fixture("h2_jw.ham").to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(out).unwrap()).unwrap();
    assert!(v.is_object());
}

#[test]
fn single_term_file_has_no_edges() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("one.ham");
    fs::write(&p, "qubits: 2\n0.5 Z0 Z1\n").unwrap();
    let o = qmg(&["graph", "--hamiltonian", p.to_str().unwrap(), "--complement"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let s = stdout(&o);
    assert_eq!(field(&s, "nodes="), 1.0);
    assert_eq!(field(&s, "edges="), 0.0);
}

#[test]
fn sorted_insertion_on_h2() {
    let o = qmg(&["baseline", "--hamiltonian", fixture("h2_jw.ham").to_str().unwrap(), "--method", "si"]);
    assert!(o.status.success());
    let s = stdout(&o);
    assert!((field(&s, "eps2M=") - 0.13645).abs() < 1e-3, "{s}");
    assert_eq!(field(&s, "n_groups="), 2.0);
    let doc: serde_json::Value = serde_json::from_str(s.lines().next().unwrap()).unwrap();
    assert_eq!(doc["method"], "si");
}

#[test]
fn rlf_on_h4_uses_eight_groups() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("rlf.json");
    let o = qmg(&[
        "baseline",
        "--hamiltonian",
        fixture("h4_jw.ham").to_str().unwrap(),
        "--method",
        "rlf",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    assert_eq!(field(&stdout(&o), "n_groups="), 8.0);
    let doc: serde_json::Value = serde_json::from_str(&fs::read_to_string(out).unwrap()).unwrap();
    assert_eq!(doc["n_groups"], 8);
    assert_eq!(doc["groups"].as_array().unwrap().iter().map(|g| g.as_array().unwrap().len()).sum::<usize>(), 184);
}

#[test]
fn greedy_on_mutually_commuting_terms_is_one_group() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("zz.ham");
    fs::write(&p, "qubits: 3\n1.0 Z0\n0.5 Z1\n0.25 Z0 Z2\n").unwrap();
    let o = qmg(&["baseline", "--hamiltonian", p.to_str().unwrap(), "--method", "greedy", "--seed", "3"]);
    assert!(o.status.success());
    assert_eq!(field(&stdout(&o), "n_groups="), 1.0);
}

#[test]
fn oracle_writes_cache_file() {
    let dir = tempfile::tempdir().unwrap();
    let o = qmg(&["oracle", "--hamiltonian", fixture("h2_jw.ham").to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert!(o.status.success());
    let names: Vec<String> = fs::read_dir(dir.path()).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
    assert_eq!(names.len(), 1);
    assert!(names[0].starts_with("cov_") && names[0].ends_with("_fc.json"));
}

fn write_config(dir: &Path, extra: &str) -> PathBuf {
    let cfg = dir.join("run.toml");
    let h2 = fixture("h2_jw.ham");
    fs::write(
        &cfg,
        format!(
            "hamiltonian = {:?}\ntotal_samples = 40\nn_update = 10\nhidden_d = 8\nseed = 7\ncheckpoint_every = 2\n{extra}",
            h2.to_str().unwrap()
        ),
    )
    .unwrap();
    cfg
}

#[test]
fn train_then_report_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    let run = dir.path().join("run");
    let o = qmg(&["train", "--config", cfg.to_str().unwrap(), "--out", run.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!((field(&stdout(&o), "best eps2M=") - 0.13645).abs() < 1e-3);
    for f in ["manifest.json", "samples.jsonl", "topk.csv", "pareto.csv", "histogram.csv"] {
        assert!(run.join(f).is_file(), "{f}");
    }
    assert!(fs::read_dir(run.join("checkpoints")).unwrap().count() > 0);
    assert_eq!(fs::read_to_string(run.join("samples.jsonl")).unwrap().lines().count(), 40);

    let first: Vec<String> = ["topk.csv", "pareto.csv", "histogram.csv"].iter().map(|f| fs::read_to_string(run.join(f)).unwrap()).collect();
    let r = qmg(&["report", run.to_str().unwrap()]);
    assert!(r.status.success());
    let again: Vec<String> = ["topk.csv", "pareto.csv", "histogram.csv"].iter().map(|f| fs::read_to_string(run.join(f)).unwrap()).collect();
    assert_eq!(first, again);
    assert_eq!(field(&stdout(&r), "samples="), 40.0);
}

#[test]
fn grouping_only_reward_reports_min_groups() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "lambda0 = 0.0\nlambda1 = 1.0\n");
    let run = dir.path().join("run");
    let o = qmg(&["train", "--config", cfg.to_str().unwrap(), "--out", run.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(field(&stdout(&o), "min groups="), 2.0);
}

#[test]
fn missing_hamiltonian_fails_without_run_dir() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(&cfg, "hamiltonian = \"nope.ham\"\n").unwrap();
    let run = dir.path().join("run");
    let o = qmg(&["train", "--config", cfg.to_str().unwrap(), "--out", run.to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(!run.exists());
}

#[test]
fn unknown_config_key_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "learning_rate = 0.1\n");
    let run = dir.path().join("run");
    let o = qmg(&["train", "--config", cfg.to_str().unwrap(), "--out", run.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!run.exists());
}

#[test]
fn malformed_hamiltonian_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.ham");
    fs::write(&p, "qubits: 2\n1.0 Q0\n").unwrap();
    let o = qmg(&["baseline", "--hamiltonian", p.to_str().unwrap(), "--method", "si"]);
    assert_eq!(o.status.code(), Some(2));
}
