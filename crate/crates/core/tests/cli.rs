use std::path::Path;
use std::process::{Command, Output};

fn timebin(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_timebin"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn manifest(out: &Path) -> serde_json::Value {
    let text = std::fs::read_to_string(out.join("manifest.json")).unwrap();
    serde_json::from_str(&text).unwrap()
}

#[test]
fn usage_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(timebin(&["frobnicate"], dir.path()).status.code(), Some(2));
    assert_eq!(timebin(&["stabilizers", "--resolution", "fine"], dir.path()).status.code(), Some(2));
    assert_eq!(timebin(&["sweep", "--sweep-kind", "loss", "--grid", "1:0:3"], dir.path()).status.code(), Some(2));
}

#[test]
fn bad_config_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "[system]\ngama_cyc = 1.0\n").unwrap();
    let out = timebin(&["calibrate", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("gama_cyc"));
}

#[test]
fn simulate_writes_dynamics_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = timebin(&["simulate", "--qubits", "1", "--sample-step", "20"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("emission.csv")).unwrap();
    let header = csv.lines().next().unwrap();
    assert!(header.starts_with("time_ps,pop_G1,pop_G2"));
    assert_eq!(csv.lines().count(), 1 + 401);
    let m = manifest(dir.path());
    assert_eq!(m["subcommand"], "simulate");
    assert!(m["outputs"].as_array().unwrap().iter().any(|f| f == "emission.csv"));
    assert!(m["wall_clock_s"].as_f64().unwrap() >= 0.0);
}

#[test]
fn correlate_then_integrate_a_saved_grid() {
    let dir = tempfile::tempdir().unwrap();
    let out = timebin(
        &["correlate", "--qubits", "2", "--resolution", "16", "--save-grid", "ELLL"],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let grid = dir.path().join("grid_ELLL.tbgrid");
    assert!(grid.exists());
    let correlations: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("correlations.json")).unwrap()).unwrap();

    let again = dir.path().join("again");
    let out = timebin(&["integrate", "--input", grid.to_str().unwrap()], &again);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let integral: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(again.join("integral.json")).unwrap()).unwrap();
    let text = integral.to_string();
    assert!(text.contains("ELLL"), "{text}");
    assert!(correlations.to_string().contains("ELLL"));
}

#[test]
fn stabilizers_report_witness_and_bound() {
    let dir = tempfile::tempdir().unwrap();
    let out = timebin(&["stabilizers", "--resolution", "quick", "--kmax", "1"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let w: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("witness.json")).unwrap()).unwrap();
    assert_eq!(w["entangled"], true);
    let csv = std::fs::read_to_string(dir.path().join("stabilizers.csv")).unwrap();
    assert!(csv.starts_with("kind,index,t0_ps,re,im,abs,arg_rad"));
    assert_eq!(manifest(dir.path())["resolution"].to_string().contains("32"), true);
}
