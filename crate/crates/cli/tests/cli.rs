use std::path::Path;
use std::process::{Command, Output};

fn rgg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rgg-edge")).args(args).output().expect("binary runs")
}

fn out_arg(dir: &Path) -> String {
    dir.to_str().unwrap().to_string()
}

#[test]
fn theory_check_passes_and_writes_spectrum() {
    let dir = tempfile::tempdir().unwrap();
    let o = rgg(&["theory", "--check", "--out", &out_arg(dir.path())]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("[PASS]"));
    let csv = std::fs::read_to_string(dir.path().join("spectrum.csv")).unwrap();
    assert!(csv.starts_with("j,a_j,group_id,k_tuple"));
    assert!(dir.path().join("run.json").exists());
}

#[test]
fn missing_config_is_an_error() {
    let o = rgg(&["converge", "--config", "/nonexistent/config.toml"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("error"));
}

#[test]
fn preset_output_loads_as_config() {
    let o = rgg(&["preset", "fig1", "--mode", "sweep-r"]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    let c = rgg_edge::ExperimentConfig::from_toml_str(&text).unwrap();
    assert_eq!(c.r_n.values().len(), 6);
    assert!(!rgg(&["preset", "nope"]).status.success());
}

#[test]
fn small_converge_run_from_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("small.toml");
    std::fs::write(
        &cfg,
        "mode = \"converge\"\nn = 400\nd = 1\nsigma = [1.0]\nr_n = 0.2\nM = 2\nrepetitions = 3\nseed = 5\n",
    )
    .unwrap();
    let out = dir.path().join("out");
    let o = rgg(&["converge", "--config", cfg.to_str().unwrap(), "--out", &out_arg(&out), "--reps", "2", "--export-mtx", "--no-svg"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(out.join("edge_eigs.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);
    assert!(!out.join("edge_eigs.svg").exists());
    let mtx = std::fs::read_to_string(out.join("affinity_rep0.mtx")).unwrap();
    assert!(mtx.starts_with("%%MatrixMarket"));
}

#[test]
fn failing_check_exits_with_two() {
    // a single radius cannot show an interior minimum
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("sweep.toml");
    std::fs::write(
        &cfg,
        "mode = \"sweep-r\"\nn = 300\nd = 1\nsigma = [1.0]\nr_n = 0.2\nM = 2\nrepetitions = 1\nseed = 1\n",
    )
    .unwrap();
    let o = rgg(&["sweep-r", "--config", cfg.to_str().unwrap(), "--out", &out_arg(dir.path()), "--check"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stdout).contains("[FAIL]"));
}
