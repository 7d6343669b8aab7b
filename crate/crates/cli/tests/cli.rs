use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn enhq(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_enhq"))
        .args(args)
        .arg("--out")
        .arg(dir)
        .env_remove("ENHQ_THREADS")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn summary(dir: &Path, command: &str) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join(format!("{command}_summary.json"))).unwrap()).unwrap()
}

#[test]
fn affine_metric_reports_curvature() {
    let tmp = TempDir::new().unwrap();
    let o = enhq(tmp.path(), &["metric", "--family", "affine", "--beta", "1", "--q", "1", "--p", "0"]);
    assert_eq!(o.status.code(), Some(0));
    let line = stdout(&o);
    assert!(line.contains("K = -1.0000"), "{line}");
    assert!(line.contains("R = 2K = -2.0000"), "{line}");
    let csv = fs::read_to_string(tmp.path().join("metric.csv")).unwrap();
    assert!(csv.starts_with("chart,p,q,g_pp,g_pq,g_qq,K,R,error\naffine,"));
}

#[test]
fn classical_toy_gravity_hits_the_pole() {
    let tmp = TempDir::new().unwrap();
    let o = enhq(tmp.path(), &["dynamics", "--model", "toygravity", "--hbar", "0", "--p0", "-1", "--q0", "1"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("singularity at t≈1.0"), "{}", stdout(&o));
    let s = summary(tmp.path(), "dynamics");
    assert_eq!(s["command"], "dynamics");
    assert!(s["version"].is_string());
    assert!(s["wall_time_s"].as_f64().unwrap() >= 0.0);
    assert_eq!(s["config"]["initial"]["p"][0], -1.0);
    let run = &s["result"]["runs"][0]["summary"];
    assert_eq!(run["status"], "singularity-reached");
    assert!((run["hit_time"].as_f64().unwrap() - 1.0).abs() < 1e-4);
    for key in ["min_q", "drift", "method", "dt"] {
        assert!(!run[key].is_null(), "{key}");
    }
    let csv = fs::read_to_string(tmp.path().join("dynamics.csv")).unwrap();
    assert!(csv.starts_with("t,p,q,H,drift\n"));
}

#[test]
fn enhanced_toy_gravity_turns_around() {
    let tmp = TempDir::new().unwrap();
    let o = enhq(tmp.path(), &["dynamics", "--hbar", "0,1", "--t-end", "4"]);
    assert_eq!(o.status.code(), Some(0));
    let line = stdout(&o);
    assert!(line.contains("hbar=0: singularity"), "{line}");
    assert!(line.contains("hbar=1: no singularity"), "{line}");
    assert!(tmp.path().join("dynamics_0.csv").exists() && tmp.path().join("dynamics_1.csv").exists());
}

#[test]
fn selftest_passes() {
    let tmp = TempDir::new().unwrap();
    let o = enhq(tmp.path(), &["selftest"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert_eq!(summary(tmp.path(), "selftest")["result"]["failed"], 0);
}

#[test]
fn invalid_configs_are_reported_together() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("never");
    let o = enhq(&out, &["metric", "--hbar", "-1", "--n", "1"]);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("hbar must be positive") && err.contains("n must be at least 2"), "{err}");
    assert!(!out.exists());

    let o = enhq(tmp.path(), &["metric", "--family", "nonsense"]);
    assert_eq!(o.status.code(), Some(1));
    let o = enhq(tmp.path(), &["wcp", "--spec", "Q.P"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn numerical_failures_exit_two_with_diagnostics() {
    let tmp = TempDir::new().unwrap();
    let o = enhq(tmp.path(), &["dynamics", "--model", "oscillator", "--tol", "1e-300", "--max-iter", "3"]);
    assert_eq!(o.status.code(), Some(2));
    let diag: Value = serde_json::from_str(&fs::read_to_string(tmp.path().join("dynamics_error.json")).unwrap()).unwrap();
    assert_eq!(diag["error"]["kind"], "numerical");
    assert!(diag["config"]["controls"]["tol"].as_f64().unwrap() == 1e-300);
}

#[test]
fn flags_override_the_config_file() {
    let tmp = TempDir::new().unwrap();
    let cfg = tmp.path().join("cfg.json");
    fs::write(&cfg, r#"{"command": "inequality", "n": 3, "alpha": [0.1, 0.2], "format": "json"}"#).unwrap();
    let o = enhq(tmp.path(), &["inequality", "--config", cfg.to_str().unwrap(), "--alpha", "0.3"]);
    assert_eq!(o.status.code(), Some(0));
    let s = summary(tmp.path(), "inequality");
    assert_eq!(s["config"]["n"], 3);
    assert_eq!(s["config"]["alpha"], serde_json::json!([0.3]));
    assert!(tmp.path().join("inequality.json").exists());
    assert_eq!(s["result"]["report"]["bounded"], true);

    fs::write(&cfg, r#"{"alpha": [0.1], "typo": 1}"#).unwrap();
    let o = enhq(tmp.path(), &["inequality", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn identical_configs_give_identical_csv() {
    let args = ["metric", "--family", "spin", "--s", "1", "--theta", "0.5,1.0,1.5", "--phi", "0,2"];
    let run = |threads: &str| {
        let tmp = TempDir::new().unwrap();
        let o = Command::new(env!("CARGO_BIN_EXE_enhq"))
            .args(args)
            .arg("--out")
            .arg(tmp.path())
            .env("ENHQ_THREADS", threads)
            .output()
            .unwrap();
        assert_eq!(o.status.code(), Some(0));
        fs::read(tmp.path().join("metric.csv")).unwrap()
    };
    assert_eq!(run("1"), run("4"));
}

#[test]
fn rotsym_and_inequality_verdicts() {
    let tmp = TempDir::new().unwrap();
    let o = enhq(tmp.path(), &["rotsym", "--n", "128", "--target", "7,19,125"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("shuffle symmetry holds"), "{}", stdout(&o));

    let o = enhq(tmp.path(), &["inequality", "--n", "5", "--alpha", "1.3"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("lhs diverges"), "{}", stdout(&o));
    let csv = fs::read_to_string(tmp.path().join("inequality.csv")).unwrap();
    assert!(csv.starts_with("n,alpha,eps,lhs,rhs,ratio\n"));
    assert_eq!(csv.lines().count(), 7);
}

#[test]
fn oscillator_offset_scales_linearly() {
    let tmp = TempDir::new().unwrap();
    let o = enhq(tmp.path(), &["wcp", "--model", "oscillator"]);
    assert_eq!(o.status.code(), Some(0));
    let s = summary(tmp.path(), "wcp");
    let exponent = s["result"]["scaling"]["fit"]["exponent"].as_f64().unwrap();
    assert!((exponent - 1.0).abs() < 0.02, "{exponent}");
}
