use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use invharm::cli::RunConfig;
use serde_json::Value;

fn invharm(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_invharm")).args(args).current_dir(dir).output().expect("binary runs")
}

fn write_config(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p.to_string_lossy().into_owned()
}

const SHORT: &str = r#"{"grid": {"t_max": 10, "samples": 201}}"#;

#[test]
fn default_config_verifies() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.json", SHORT);
    let out = invharm(&["verify", "--config", &cfg], tmp.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["pass"], Value::Bool(true));
    assert!(report["dual_formula"]["samples"].as_u64().unwrap() > 100);
}

#[test]
fn verification_failure_exit_code() {
    let tmp = tempfile::tempdir().unwrap();
    // Loose integration cannot reach the oracle tolerance.
    let body = r#"{"grid": {"t_max": 10, "samples": 3}, "integrator": {"rel_tol": 1e-2, "abs_tol": 1e-2, "max_step": 10}}"#;
    let cfg = write_config(tmp.path(), "c.json", body);
    let out = invharm(&["verify", "--config", &cfg], tmp.path());
    assert_eq!(out.status.code(), Some(2));
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["oracle"]["pass"], Value::Bool(false));
}

#[test]
fn malformed_config_reports_json_error() {
    let tmp = tempfile::tempdir().unwrap();
    for body in ["{not json", r#"{"modes": {"omega": -1}}"#, r#"{"colour": 3}"#] {
        let cfg = write_config(tmp.path(), "bad.json", body);
        let out = invharm(&["modes", "--config", &cfg], tmp.path());
        assert_eq!(out.status.code(), Some(1), "{body}");
        let err: Value = serde_json::from_slice(&out.stderr).unwrap();
        assert_eq!(err["error"], "validation");
        assert!(err["message"].as_str().unwrap().len() > 3);
    }
    let out = invharm(&["modes", "--config", "/nonexistent/c.json"], tmp.path());
    assert_eq!(out.status.code(), Some(1));
    let out = invharm(&["frobnicate", "--config", "x"], tmp.path());
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn uncoupled_coeffs_have_zero_f1() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.json", r#"{"modes": {"theta_c": 0}, "grid": {"t_max": 20, "dt": 0.1}}"#);
    let out = invharm(&["coeffs", "--config", &cfg], tmp.path());
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let k = header.iter().position(|h| *h == "f1").unwrap();
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 201);
    assert!(rows.iter().all(|r| r.split(',').nth(k).unwrap().parse::<f64>().unwrap() == 0.0));
}

#[test]
fn outputs_are_byte_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let body = r#"{"grid": {"t_max": 12, "samples": 301}, "method": "compare"}"#;
    let cfg = write_config(tmp.path(), "c.json", body);
    for run in ["a", "b"] {
        let out = invharm(&["evolve", "--config", &cfg, "--out", run], tmp.path());
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    for name in ["evolve.csv", "meta.json"] {
        let a = fs::read(tmp.path().join("a").join(name)).unwrap();
        let b = fs::read(tmp.path().join("b").join(name)).unwrap();
        assert_eq!(a, b, "{name}");
        assert!(!a.contains(&b'\r'));
    }
    let csv = fs::read_to_string(tmp.path().join("a/evolve.csv")).unwrap();
    let first = csv.lines().nth(1).unwrap();
    // t = 0 row: 17 significant digits in scientific notation.
    assert!(first.starts_with("0.0000000000000000e0,"), "{first}");
}

#[test]
fn meta_echo_round_trips() {
    let tmp = tempfile::tempdir().unwrap();
    let body = r#"{"modes": {"theta_c": "pi/128", "lambda_sq": 2}, "system": {"r": 3, "angle": "pi/8"},
                   "grid": {"t_max": 8, "samples": 81}, "fit_window": [1, "2*pi"]}"#;
    let cfg = write_config(tmp.path(), "c.json", body);
    let out = invharm(&["evolve", "--config", &cfg, "--out", "o"], tmp.path());
    assert!(out.status.success());
    let meta: Value = serde_json::from_str(&fs::read_to_string(tmp.path().join("o/meta.json")).unwrap()).unwrap();
    let echoed: RunConfig = serde_json::from_value(meta["config"].clone()).unwrap();
    assert_eq!(echoed, RunConfig::from_json(body).unwrap());
}

#[test]
fn scan_over_coupling() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.json", r#"{"grid": {"t_max": 20, "dt": 0.01}}"#);
    let out = Command::new(env!("CARGO_BIN_EXE_invharm"))
        .args(["scan", "--config", &cfg, "--out", "scan", "--vary", "theta_c", "--values", "pi/64,pi/256,pi/1024"])
        .current_dir(tmp.path())
        .env("INVHARM_THREADS", "2")
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let index: Value = serde_json::from_str(&fs::read_to_string(tmp.path().join("scan/scan_index.json")).unwrap()).unwrap();
    let runs = index["runs"].as_array().unwrap();
    assert_eq!(runs.len(), 3);
    let s0: Vec<f64> = runs.iter().map(|r| r["s0"].as_f64().unwrap()).collect();
    for w in s0.windows(2) {
        let step = w[1] - w[0];
        assert!((step / -4f64.ln() - 1.0).abs() < 0.3, "{s0:?}");
    }
    for (i, r) in runs.iter().enumerate() {
        assert_eq!(r["file"], format!("scan_{i:03}.csv"));
        assert!(tmp.path().join("scan").join(r["file"].as_str().unwrap()).exists());
    }
}

#[test]
fn scan_needs_arguments() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.json", SHORT);
    assert_eq!(invharm(&["scan", "--config", &cfg, "--out", "s"], tmp.path()).status.code(), Some(1));
    let out = invharm(&["scan", "--config", &cfg, "--out", "s", "--vary", "colour", "--values", "1"], tmp.path());
    assert_eq!(out.status.code(), Some(1));
    let out = invharm(&["modes", "--config", &cfg, "--vary", "g", "--values", "1"], tmp.path());
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn bad_thread_cap_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.json", SHORT);
    let out =
        Command::new(env!("CARGO_BIN_EXE_invharm")).args(["modes", "--config", &cfg]).env("INVHARM_THREADS", "zero").output().unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn modes_and_divergences_reports() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.json", r#"{"bare": {"omega_bare": 1, "lambda_sq_bare": 1, "g": 0.1}}"#);
    let out = invharm(&["modes", "--config", &cfg, "--out", "o"], tmp.path());
    assert!(out.status.success());
    let r: Value = serde_json::from_slice(&out.stdout).unwrap();
    let (w, rt) = (r["modes"]["omega"].as_f64().unwrap(), r["round_trip"]["omega"].as_f64().unwrap());
    assert!((w - rt).abs() < 1e-14);
    assert!(tmp.path().join("o/modes.json").exists());

    let cfg = write_config(tmp.path(), "d.json", SHORT);
    let out = invharm(&["divergences", "--config", &cfg], tmp.path());
    let r: Value = serde_json::from_slice(&out.stdout).unwrap();
    let roots = r["divergence_times"].as_array().unwrap();
    assert_eq!(roots.len(), 1);
    let tc = r["t_c_derived"].as_f64().unwrap();
    assert!(roots[0].as_f64().unwrap() > tc - 0.5);
    assert!(r["t_c_paper"].as_f64().unwrap() < tc);
}

#[test]
fn non_csv_format_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.json", r#"{"output": {"format": "parquet"}}"#);
    assert_eq!(invharm(&["coeffs", "--config", &cfg], tmp.path()).status.code(), Some(1));
}

#[test]
fn config_output_path_used() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.json", r#"{"grid": {"t_max": 1, "samples": 11}, "output": {"path": "from_cfg"}}"#);
    let out = invharm(&["evolve", "--config", &cfg], tmp.path());
    assert!(out.status.success());
    assert!(out.stdout.is_empty());
    assert!(tmp.path().join("from_cfg/evolve.csv").exists());
}

#[test]
fn numerical_failure_exit_code() {
    let tmp = tempfile::tempdir().unwrap();
    let body = r#"{"grid": {"t_max": 1, "samples": 11}, "method": "me", "integrator": {"max_step": 1e-20}}"#;
    let cfg = write_config(tmp.path(), "c.json", body);
    let out = invharm(&["evolve", "--config", &cfg], tmp.path());
    assert_eq!(out.status.code(), Some(3));
    let err: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"], "numerical");
}
