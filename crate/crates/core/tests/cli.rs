use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn udgc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_udgc")).args(args).output().expect("binary runs")
}

fn stdout_json(out: &Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("stdout is json")
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn eval_identical_files_scores_one() {
    let dir = tempfile::tempdir().unwrap();
    let f = dir.path().join("l.txt");
    std::fs::write(&f, "0\n0\n1\n2\n1\n").unwrap();
    let v = stdout_json(&udgc(&["eval", path_str(&f), path_str(&f)]));
    assert_eq!(v["acc"], 1.0);
    assert_eq!(v["nmi"], 1.0);
    assert_eq!(v["ari"], 1.0);
    assert_eq!(v["n"], 5);
    assert_eq!(v["C_pred"], 3);
    assert!(v["version"].as_str().unwrap().starts_with("udgc "));
    assert!(v["config"].is_object());
}

#[test]
fn eval_bad_file_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let f = dir.path().join("l.txt");
    std::fs::write(&f, "0\nfoo\n").unwrap();
    let out = udgc(&["eval", path_str(&f), path_str(&f)]);
    assert_eq!(out.status.code(), Some(3));
    let missing = udgc(&["eval", "/nonexistent/a", "/nonexistent/b"]);
    assert_eq!(missing.status.code(), Some(3));
    let err = String::from_utf8_lossy(&missing.stderr);
    assert_eq!(err.trim().lines().count(), 1, "{err}");
}

#[test]
fn ot_acot_symmetric_views_agree() {
    let dir = tempfile::tempdir().unwrap();
    let cost = dir.path().join("m.csv");
    std::fs::write(&cost, "0.2,0.9,0.5\n0.7,0.1,0.4\n0.3,0.8,0.6\n0.5,0.5,0.2\n").unwrap();
    let out_dir = dir.path().join("acot");
    let v = stdout_json(&udgc(&[
        "ot", "acot", "--cost", path_str(&cost), "--cost-prime", path_str(&cost), "--epsilon", "0.1", "--out",
        path_str(&out_dir),
    ]));
    assert!(v["kl_pi_piprime"].as_f64().unwrap() < 1e-10);
    assert_eq!(v["labels"].as_array().unwrap().len(), 4);
    assert!(out_dir.join("pi.csv").exists() && out_dir.join("pi_prime.csv").exists());
    let saved: Value = serde_json::from_str(&std::fs::read_to_string(out_dir.join("acot.json")).unwrap()).unwrap();
    assert_eq!(saved, v);
}

#[test]
fn ot_solve_writes_a_feasible_plan() {
    let dir = tempfile::tempdir().unwrap();
    let cost = dir.path().join("c.csv");
    std::fs::write(&cost, "1,2,3\n3,1,2\n2,3,1\n1,1,1\n").unwrap();
    let v = stdout_json(&udgc(&["ot", "solve", "--cost", path_str(&cost), "--reg", "0.1", "--out", path_str(dir.path())]));
    assert!(v["row_err"].as_f64().unwrap() < 1e-6 && v["col_err"].as_f64().unwrap() < 1e-6);
    let plan = std::fs::read_to_string(dir.path().join("plan.csv")).unwrap();
    assert_eq!(plan.lines().count(), 4);

    let bad = udgc(&["ot", "solve", "--cost", path_str(&cost), "--reg", "0", "--out", path_str(dir.path())]);
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn ot_caot_reports_a_matching() {
    let dir = tempfile::tempdir().unwrap();
    let pts = dir.path().join("x.csv");
    std::fs::write(&pts, "5,0\n5.1,0.1\n4.9,-0.1\n-5,0\n-5.1,0.1\n-4.9,-0.1\n").unwrap();
    let agents = dir.path().join("w.csv");
    std::fs::write(&agents, "-1,0\n1,0\n").unwrap();
    let v = stdout_json(&udgc(&[
        "ot", "caot", "--points", path_str(&pts), "--clusters", "2", "--agents", path_str(&agents), "--out",
        path_str(dir.path()),
    ]));
    let matching: Vec<u64> = v["matching"].as_array().unwrap().iter().map(|m| m.as_u64().unwrap()).collect();
    let centers = std::fs::read_to_string(dir.path().join("centers.csv")).unwrap();
    let first: f64 = centers.lines().next().unwrap().split(',').next().unwrap().parse().unwrap();
    let agent0_center = if first < 0.0 { 0 } else { 1 };
    assert_eq!(matching[0], agent0_center);
    assert!(dir.path().join("psi.csv").exists());
}

#[test]
fn synth_then_inspect_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let ds_dir = dir.path().join("TOY");
    let s = stdout_json(&udgc(&["synth", "--preset", "er4", "--per-class", "5", "--seed", "3", "--out", path_str(&ds_dir), "--name", "TOY"]));
    let i = stdout_json(&udgc(&["inspect", path_str(&ds_dir)]));
    assert_eq!(i["graphs"], 20);
    assert_eq!(i["clusters"], 4);
    assert_eq!(i["dataset_hash"], s["dataset_hash"]);
    let again = stdout_json(&udgc(&["synth", "--preset", "er4", "--per-class", "5", "--seed", "3", "--out", path_str(&ds_dir), "--name", "TOY"]));
    assert_eq!(again["dataset_hash"], s["dataset_hash"]);
}

#[test]
fn inspect_mutag_matches_known_statistics() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data/MUTAG");
    let v = stdout_json(&udgc(&["inspect", path_str(&dir)]));
    assert_eq!(v["graphs"], 188);
    assert_eq!(v["clusters"], 2);
    assert!((v["ls_ratio"].as_f64().unwrap() - 1.98).abs() < 0.01);
}

#[test]
fn cluster_is_deterministic_and_echo_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str, extra: &[&str]| {
        let out = dir.path().join(name);
        let mut args = vec!["cluster", "--synthetic", "er2", "--seed", "7", "--epochs", "4", "--out", path_str(&out)];
        args.extend_from_slice(extra);
        let owned: Vec<String> = args.iter().map(|s| s.to_string()).collect();
        let refs: Vec<&str> = owned.iter().map(String::as_str).collect();
        let v = stdout_json(&udgc(&refs));
        (out, v)
    };
    let (a, va) = run("a", &[]);
    let (b, _) = run("b", &[]);
    let labels = "labels-seed7-lambda0.1.txt";
    assert_eq!(std::fs::read(a.join(labels)).unwrap(), std::fs::read(b.join(labels)).unwrap());
    assert_eq!(std::fs::read_to_string(a.join(labels)).unwrap().lines().count(), 200);
    assert!(va["runs"][0]["metrics"]["acc"].as_f64().is_some());
    assert!(a.join("log-seed7-lambda0.1.jsonl").exists());

    let echo = std::fs::read_to_string(a.join("config.txt")).unwrap();
    assert_eq!(va["config"].as_str().unwrap(), echo);
    let c = dir.path().join("c");
    let out = udgc(&["cluster", "--config", path_str(&a.join("config.txt")), "--out", path_str(&c)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let echo_c = std::fs::read_to_string(c.join("config.txt")).unwrap();
    assert_eq!(echo_c, echo.replace(path_str(&a), path_str(&c)));
    assert_eq!(std::fs::read(a.join(labels)).unwrap(), std::fs::read(c.join(labels)).unwrap());
}

#[test]
fn cluster_lambda_sweep_emits_one_row_per_value() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sweep");
    stdout_json(&udgc(&[
        "cluster", "--synthetic", "er2", "--epochs", "2", "--lambda", "0,0.01,0.1,1,10", "--out", path_str(&out),
    ]));
    let csv = std::fs::read_to_string(out.join("sweep.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().collect();
    assert_eq!(rows.len(), 6);
    assert!(rows[0].starts_with("lambda,"));
    assert!(rows[5].starts_with("10,"));
}

#[test]
fn cluster_rejects_negative_lambda_naming_the_flag() {
    let out = udgc(&["cluster", "--synthetic", "er2", "--lambda", "-1"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("lambda"), "{err}");
    assert_eq!(err.trim().lines().count(), 1, "{err}");
}

#[test]
fn cluster_unknown_config_key_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    std::fs::write(&cfg, "synthetic = er2\nwarp_factor = 9\n").unwrap();
    let out = udgc(&["cluster", "--config", path_str(&cfg)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("warp_factor"));
}

#[test]
fn cluster_missing_dataset_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = udgc(&["cluster", "--dataset", path_str(&dir.path().join("NOPE")), "--out", path_str(dir.path())]);
    assert_eq!(out.status.code(), Some(3));
}
