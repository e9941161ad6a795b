use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn gppm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gppm"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let p = dir.join("run.json");
    std::fs::write(&p, body).unwrap();
    p
}

fn error_json(out: &Output) -> Value {
    let text = String::from_utf8_lossy(&out.stderr);
    let line = text.lines().last().expect("stderr has the error");
    serde_json::from_str(line).expect("error is JSON")
}

const QUICK_HMC: &str = r#""hmc": {"warmup_iters": 100, "sampling_iters": 40, "chains": 1, "max_leapfrog": 31}"#;

#[test]
fn simulate_fit_dashboard_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        &format!(
            r#"{{
  "simulate": {{"gppm": {{"n_customers": 200, "horizon": 50, "acquisition_window": 20, "cyclic_level": "strongcyc"}}}},
  "data": {{"events": "out/events.csv", "customers": "out/customers.csv"}},
  "model": {{"first_spend_effects": false}},
  {QUICK_HMC},
  "dashboard": {{"events": [{{"start": 10, "end": 12, "label": "launch"}}]}}
}}"#
        ),
    );
    let fit_body = std::fs::read_to_string(&cfg).unwrap();
    let sim_cfg = write_config(
        dir.path(),
        r#"{"simulate": {"gppm": {"n_customers": 200, "horizon": 50, "acquisition_window": 20, "cyclic_level": "strongcyc"}}}"#,
    );
    let sim = gppm(&["simulate", "--config", sim_cfg.to_str().unwrap(), "--seed", "5"]);
    assert!(sim.status.success(), "{}", String::from_utf8_lossy(&sim.stderr));
    let out = dir.path().join("out");
    for f in ["events.csv", "customers.csv", "truth.json"] {
        assert!(out.join(f).is_file(), "{f}");
    }
    let cfg = write_config(dir.path(), &fit_body);
    let fit = gppm(&["fit", "--config", cfg.to_str().unwrap(), "--seed", "2"]);
    assert!(fit.status.success(), "{}", String::from_utf8_lossy(&fit.stderr));
    for f in ["draws.bin", "parameters.csv", "fit.json"] {
        assert!(out.join(f).is_file(), "{f}");
    }
    let params = std::fs::read_to_string(out.join("parameters.csv")).unwrap();
    assert!(params.starts_with("parameter,median,lower,upper,rhat,ess"));
    assert!(params.contains("cyclic.amplitude"));

    let dash = gppm(&["dashboard", "--config", cfg.to_str().unwrap()]);
    assert!(dash.status.success(), "{}", String::from_utf8_lossy(&dash.stderr));
    let d = out.join("dashboard");
    for f in [
        "long_run.svg",
        "short_run.svg",
        "cyclic.svg",
        "recency.svg",
        "lifetime.svg",
        "purchase_number.svg",
        "dashboard.html",
    ] {
        assert!(d.join(f).is_file(), "{f}");
    }
    let short = std::fs::read_to_string(d.join("short_run.svg")).unwrap();
    assert!(short.contains("class=\"event\""));

    // same inputs and seed, same bytes
    let first = std::fs::read(out.join("draws.bin")).unwrap();
    let again = gppm(&["fit", "--config", cfg.to_str().unwrap(), "--seed", "2"]);
    assert!(again.status.success());
    assert_eq!(std::fs::read(out.join("draws.bin")).unwrap(), first);
}

#[test]
fn compare_emits_one_row_per_model() {
    let dir = tempfile::tempdir().unwrap();
    let sim_cfg = write_config(
        dir.path(),
        r#"{"simulate": {"gppm": {"n_customers": 120, "horizon": 45, "acquisition_window": 15}}}"#,
    );
    assert!(gppm(&["simulate", "--config", sim_cfg.to_str().unwrap()])
        .status
        .success());
    let cfg = write_config(
        dir.path(),
        &format!(
            r#"{{"data": {{"events": "out/events.csv", "customers": "out/customers.csv"}},
  "model": {{"first_spend_effects": false}},
  "compare": {{"bgnbd_replicates": 5, "loglogistic": {{"event_windows": [{{"start": 20, "end": 25}}]}}}},
  "predict": {{"max_draws": 20}},
  {QUICK_HMC}}}"#
        ),
    );
    let out = gppm(&["compare", "--config", cfg.to_str().unwrap(), "--holdout-days", "15"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let table = std::fs::read_to_string(dir.path().join("out/compare.csv")).unwrap();
    let mut lines = table.lines();
    assert_eq!(
        lines.next().unwrap(),
        "model,overall_mape,overall_rmse,training_mape,training_rmse,holdout_mape,holdout_rmse"
    );
    let models: Vec<&str> = lines.map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(models, ["gppm", "rgppm", "rgppm_c", "bgnbd", "loglogistic"]);
}

#[test]
fn invalid_key_is_a_validation_error_with_its_path() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"hmc": {"chains": 1, "step": 3}}"#);
    let out = gppm(&["fit", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let e = error_json(&out);
    assert_eq!(e["error"]["kind"], "validation");
    assert_eq!(e["error"]["path"], "hmc.step");
}

#[test]
fn missing_data_and_bad_holdout_are_validation_errors() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"data": {"events": "nope.csv", "customers": "nope2.csv"}}"#,
    );
    let out = gppm(&["fit", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_json(&out)["error"]["path"], "data.events");

    let cfg = write_config(dir.path(), "{}");
    let out = gppm(&["fit", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_json(&out)["error"]["path"], "data");
}

#[test]
fn sampler_failure_is_a_numerical_error() {
    let dir = tempfile::tempdir().unwrap();
    let sim_cfg = write_config(
        dir.path(),
        r#"{"simulate": {"gppm": {"n_customers": 60, "horizon": 40, "acquisition_window": 10}}}"#,
    );
    assert!(gppm(&["simulate", "--config", sim_cfg.to_str().unwrap()])
        .status
        .success());
    let cfg = write_config(
        dir.path(),
        r#"{"data": {"events": "out/events.csv", "customers": "out/customers.csv"},
  "hmc": {"warmup_iters": 0, "sampling_iters": 20, "chains": 1, "initial_step_size": 50.0, "algorithm": "jittered_hmc", "max_leapfrog": 10}}"#,
    );
    let out = gppm(&["fit", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(error_json(&out)["error"]["kind"], "numerical");
}
