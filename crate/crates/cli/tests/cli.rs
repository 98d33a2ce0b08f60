use std::process::Command;

fn resmem() -> Command {
    Command::new(env!("CARGO_BIN_EXE_resmem"))
}

#[test]
fn quick_preset_writes_csv_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = resmem()
        .args(["run", "delay-coefficients", "--quick", "--seeds", "7", "--workers", "1", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("delay-coefficients.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "experiment,driver,seed,g,epsilon,eta_f,d_e,narma_order,rho,metric,index,value,status"
    );
    assert!(csv.lines().skip(1).all(|l| l.ends_with(",ok")));
    assert!(csv.contains("delay-coefficients,lorenz,7,"));
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("delay-coefficients.json")).unwrap()).unwrap();
    assert_eq!(manifest["spec"]["seeds"], serde_json::json!([7]));
}

#[test]
fn metrics_reads_toml_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("sweep.toml");
    std::fs::write(
        &cfg,
        "experiment = \"paths\"\nmetrics = [\"path_length\"]\nseeds = [1]\nm = 20\n[grid]\neta_f = [0.3, 1.0]\n",
    )
    .unwrap();
    let out = resmem().args(["metrics", "--config"]).arg(&cfg).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().filter(|l| l.contains("mean_unweighted_path_length")).count(), 4);
}

#[test]
fn netstats_reports_matrix_statistics() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ring.csv");
    std::fs::write(&path, "0,1,0,0\n0,0,1,0\n0,0,0,1\n1,0,0,0\n").unwrap();
    let out = resmem().args(["netstats", "--calibrate", "0.5", "--matrix"]).arg(&path).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["nodes"], 4);
    assert!((v["spectral_radius"].as_f64().unwrap() - 1.0).abs() < 1e-9);
    assert!((v["mean_unweighted_path_length"].as_f64().unwrap() - 4.0 / 3.0).abs() < 1e-12);
    assert_eq!(v["delay_coefficients"].as_array().unwrap().len(), 4);
}

#[test]
fn unknown_target_fails_cleanly() {
    let out = resmem().args(["run", "no-such-preset"]).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("neither a preset"));
}
