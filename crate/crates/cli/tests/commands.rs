use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn wieq(args: &[&str], config: &Path, out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wieq"))
        .args(args)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .output()
        .expect("failed to launch wieq")
}

fn read_json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let path = dir.join("scenario.json");
    std::fs::write(&path, body).unwrap();
    path
}

#[test]
fn verify_default_exogenous_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = wieq(&["verify"], &config("default_exogenous.json"), dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v = read_json(&dir.path().join("verification.json"));
    assert_eq!(v["pass"], true);
    assert_eq!(v["ui_tax_kind"], "lump_sum");
    for check in v["checks"].as_array().unwrap() {
        assert_eq!(check["pass"], true, "{check}");
    }
}

#[test]
fn replicate_exogenous_writes_lump_sum_policy() {
    let dir = tempfile::tempdir().unwrap();
    let out = wieq(&["replicate"], &config("default_exogenous.json"), dir.path());
    assert_eq!(out.status.code(), Some(0));
    let p = read_json(&dir.path().join("ui_policy.json"));
    assert_eq!(p["tax"]["kind"], "lump_sum");
    assert!(!dir.path().join("q_schedule.csv").exists());
}

#[test]
fn replicate_endogenous_writes_schedule() {
    let dir = tempfile::tempdir().unwrap();
    let out = wieq(&["replicate"], &config("default_endogenous.json"), dir.path());
    assert_eq!(out.status.code(), Some(0));
    let p = read_json(&dir.path().join("ui_policy.json"));
    assert_eq!(p["tax"]["kind"], "schedule");
    let csv = std::fs::read_to_string(dir.path().join("q_schedule.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("w,q,tau"));
    let q: Vec<f64> = lines.map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert!(q.windows(2).all(|p| p[1] > p[0]));
}

#[test]
fn solve_writes_solution_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = wieq(&["solve"], &config("default_exogenous.json"), dir.path());
    assert_eq!(out.status.code(), Some(0));
    let csv = std::fs::read_to_string(dir.path().join("wi_solution.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("z,w_res,surplus,effort,value"));
    assert_eq!(csv.lines().count(), 202);
    let s = read_json(&dir.path().join("wi_solution.json"));
    assert!(s["budget_residual"].as_f64().unwrap().abs() < 1e-9);
}

#[test]
fn lemma_check_flags_pooling_below_threshold() {
    let dir = tempfile::tempdir().unwrap();
    let out = wieq(&["lemma-check"], &config("default_endogenous.json"), dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let sol = tempfile::tempdir().unwrap();
    wieq(&["solve"], &config("default_endogenous.json"), sol.path());
    let x0 = read_json(&sol.path().join("wi_solution.json"))["solution"]["x0"].as_f64().unwrap();
    let csv = std::fs::read_to_string(dir.path().join("lemma.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("z,w_res,dw_analytic,dw_fd,dS_analytic,dS_fd,region"));
    let mut pooled = 0;
    for line in lines {
        let cols: Vec<&str> = line.split(',').collect();
        let z: f64 = cols[0].parse().unwrap();
        assert_eq!(cols[6] == "pooling", z <= x0, "{line}");
        pooled += usize::from(cols[6] == "pooling");
    }
    assert!(pooled > 0);
}

#[test]
fn lemma_check_needs_endogenous_search() {
    let dir = tempfile::tempdir().unwrap();
    let out = wieq(&["lemma-check"], &config("default_exogenous.json"), dir.path());
    assert_eq!(out.status.code(), Some(2));
    let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"], "mode_mismatch");
}

#[test]
fn sweep_writes_one_row_per_value() {
    let dir = tempfile::tempdir().unwrap();
    let out = wieq(&["sweep"], &config("sweep_phi_exogenous.json"), dir.path());
    assert_eq!(out.status.code(), Some(0));
    let csv = std::fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 7);
    assert!(csv.lines().skip(1).all(|l| l.contains(",true,")));
}

#[test]
fn bad_phi_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{
            "primitives": {"r": 0.05, "mode": "exogenous_arrival", "lambda_bar": 0.8},
            "policy": {"b": 0.4, "phi": 1.0},
            "offer_dist": {"family": "uniform", "lo": 0.2, "hi": 5.0},
            "prior_dist": {"family": "uniform", "lo": 0.5, "hi": 3.0}
        }"#,
    );
    let out = wieq(&["verify"], &cfg, dir.path());
    assert_eq!(out.status.code(), Some(2));
    let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"], "config");
    assert!(err["message"].as_str().unwrap().contains("phi must lie in [0, 0.99]"));
}

#[test]
fn missing_config_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = wieq(&["solve"], &dir.path().join("nope.json"), dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn failing_tolerance_gives_exit_four() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(config("default_exogenous.json")).unwrap();
    let mut doc: serde_json::Value = serde_json::from_str(&text).unwrap();
    doc["tolerances"]["reservation"] = serde_json::json!(1e-30);
    let cfg = write_config(dir.path(), &doc.to_string());
    let out = wieq(&["verify"], &cfg, dir.path());
    assert_eq!(out.status.code(), Some(4));
    let v = read_json(&dir.path().join("verification.json"));
    assert_eq!(v["pass"], false);
}

#[test]
fn verify_is_byte_identical_on_rerun() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    wieq(&["verify"], &config("default_exogenous.json"), a.path());
    wieq(&["verify"], &config("default_exogenous.json"), b.path());
    for f in ["verification.json", "welfare_wi.csv", "welfare_ui.csv"] {
        assert_eq!(
            std::fs::read(a.path().join(f)).unwrap(),
            std::fs::read(b.path().join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn simulate_with_seed_override() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(config("default_exogenous.json")).unwrap();
    let mut doc: serde_json::Value = serde_json::from_str(&text).unwrap();
    doc["sim"]["n_agents"] = serde_json::json!(20000);
    let cfg = write_config(dir.path(), &doc.to_string());
    let out = wieq(&["simulate", "--seed", "7"], &cfg, dir.path());
    assert!(matches!(out.status.code(), Some(0) | Some(4)));
    let r = read_json(&dir.path().join("sim_report.json"));
    assert_eq!(r["config"]["seed"], 7);
    assert_eq!(r["wi"]["report"]["n_agents"], 20000);
}
