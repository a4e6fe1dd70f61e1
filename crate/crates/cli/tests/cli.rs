use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn otdro(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_otdro")).args(args).output().expect("binary runs")
}

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn dual_value_writes_result_json() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("result.json");
    let o = otdro(&["dual-value", "--config", s(&config("dual_value.json")), "--out", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_slice(&fs::read(&out).unwrap()).unwrap();
    for key in ["value", "lambda_opt", "nu_opt", "certificate", "evaluations"] {
        assert!(v.get(key).is_some(), "missing {key} in {v}");
    }
    assert_eq!(v["method"], "ot_regularized");
}

#[test]
fn primal_check_prints_table_and_fails_on_zero_tolerance() {
    let o = otdro(&["primal-check", "--config", s(&config("primal_check.json"))]);
    assert!(o.status.success());
    let table = String::from_utf8(o.stdout).unwrap();
    assert_eq!(table.lines().filter(|l| l.trim_end().ends_with("ok")).count(), 10);

    let dir = tempfile::tempdir().unwrap();
    let mut cfg: serde_json::Value = serde_json::from_slice(&fs::read(config("primal_check.json")).unwrap()).unwrap();
    cfg["tol"] = serde_json::json!(-1.0);
    let path = dir.path().join("strict.json");
    fs::write(&path, cfg.to_string()).unwrap();
    assert_eq!(otdro(&["primal-check", "--config", s(&path)]).status.code(), Some(2));
}

#[test]
fn bounds_report_has_log_echo_and_g_check() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("report.json");
    let o = otdro(&["bounds", "--config", s(&config("bounds.json")), "--out", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_slice(&fs::read(&out).unwrap()).unwrap();
    let d_n = v["D_n"].as_f64().unwrap();
    assert!((v["log"]["D_n"].as_f64().unwrap() - d_n.ln()).abs() < 1e-12);
    assert!(v["R_n_tilde"].as_f64().unwrap() > 0.0);
    assert_eq!(v["g_check"]["violations"].as_array().unwrap().len(), 0);
}

#[test]
fn erm_experiment_is_byte_reproducible_with_plots() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        let o = otdro(&["erm-experiment", "--config", s(&config("erm_ot.json")), "--out", s(d.path())]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        let p = otdro(&["plots", "--csv", s(&d.path().join("trials.csv"))]);
        assert!(p.status.success());
    }
    for f in ["trials.csv", "summary.csv", "run.json", "trials_histogram.svg", "trials_exceedance.svg"] {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f} differs");
    }
}

#[test]
fn experiment_subcommand_must_match_scenario() {
    let dir = tempfile::tempdir().unwrap();
    let o = otdro(&["concentration-experiment", "--config", s(&config("erm_ot.json")), "--out", s(dir.path())]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn plots_reject_empty_trials() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("trials.csv");
    fs::write(&csv, "trial,empirical_value,reference_value,deviation,theta,excess,eps_opt\n").unwrap();
    fs::write(dir.path().join("summary.csv"), "").unwrap();
    let o = otdro(&["plots", "--csv", s(&csv)]);
    assert!(!o.status.success());
    assert!(!dir.path().join("trials_histogram.svg").exists());
}

#[test]
fn malformed_config_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    fs::write(&path, r#"{"family": {"family": "nope"}}"#).unwrap();
    let o = otdro(&["bounds", "--config", s(&path), "--out", s(&dir.path().join("r.json"))]);
    assert_eq!(o.status.code(), Some(1));
}
