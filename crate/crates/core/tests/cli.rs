use std::fs;
use std::process::Command;

fn perifront() -> Command {
    Command::new(env!("CARGO_BIN_EXE_perifront"))
}

#[test]
fn dispersion_results_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let mut outs = Vec::new();
    for (tag, threads) in [("a", "4"), ("b", "1")] {
        let out = dir.path().join(tag);
        let st = perifront()
            .args(["dispersion", "--model", "constant2", "--c", "2.5", "--out"])
            .arg(&out)
            .env("PERIFRONT_THREADS", threads)
            .status()
            .unwrap();
        assert_eq!(st.code(), Some(0));
        outs.push(fs::read_to_string(out.join("results.json")).unwrap());
        assert!(out.join("resolved-config.json").exists());
        let csv = fs::read_to_string(out.join("dispersion.csv")).unwrap();
        assert!(csv.starts_with("# lambda, kappa_1, kappa_2\n"));
    }
    assert_eq!(outs[0], outs[1]);
    let v: serde_json::Value = serde_json::from_str(&outs[0]).unwrap();
    let r = &v["results"];
    assert!((r["c_plus0"].as_f64().unwrap() - 2.0).abs() < 1e-6);
    assert!((r["lambda_plus0"].as_f64().unwrap() - 1.0).abs() < 1e-6);
    assert!((r["lambda_c"].as_f64().unwrap() - 0.5).abs() < 1e-6);
    assert!(v["tolerances"]["critical_tol"].is_number());
}

#[test]
fn resolved_config_reruns_identically() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let st = perifront().args(["certify", "--model", "constant2", "--n", "32", "--c", "2.5", "--out"]).arg(&a).status().unwrap();
    assert_eq!(st.code(), Some(0));
    let margins = fs::read_to_string(a.join("margins.csv")).unwrap();
    assert!(margins.starts_with("# component, s, t, margin\n"));
    let mut cfg: serde_json::Value = serde_json::from_str(&fs::read_to_string(a.join("resolved-config.json")).unwrap()).unwrap();
    let b = dir.path().join("b");
    cfg["output"] = serde_json::json!(b.to_string_lossy());
    let path = dir.path().join("cfg.json");
    fs::write(&path, cfg.to_string()).unwrap();
    let st = perifront().args(["certify", "--config"]).arg(&path).status().unwrap();
    assert_eq!(st.code(), Some(0));
    assert_eq!(fs::read_to_string(a.join("results.json")).unwrap(), fs::read_to_string(b.join("results.json")).unwrap());
}

#[test]
fn missing_model_exits_with_schema_status() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cfg.json");
    fs::write(&path, r#"{"experiment": "dispersion"}"#).unwrap();
    let out = perifront().args(["dispersion", "--config"]).arg(&path).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("/model"));
}

#[test]
fn numerical_failure_exits_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let out = perifront()
        .args(["dispersion", "--model", "constant2", "--c", "1.5", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn simulate_emits_front_table() {
    let dir = tempfile::tempdir().unwrap();
    let st = perifront()
        .args(["simulate", "--model", "constant2", "--n", "32", "--t-end", "40", "--window-cells", "30", "--out"])
        .arg(dir.path())
        .status()
        .unwrap();
    assert_eq!(st.code(), Some(0));
    let csv = fs::read_to_string(dir.path().join("fronts.csv")).unwrap();
    assert!(csv.starts_with("# t, position, c_running\n"));
    assert!(dir.path().join("trajectory.bin").exists());
}
