mod common;

use common::*;
use std::path::Path;
use std::process::{Command, Output};

fn scale(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_scale")).args(args).current_dir(cwd).env_remove("SCALE_OUTPUT_DIR").output().expect("binary runs")
}

fn write_cfg(dir: &Path, top: &str, sections: &str) -> String {
    let data = workspace_root().join("data/wdbc.data");
    let text = format!("{top}[data]\npath = {:?}\nn_nodes = 20\n[clustering]\nk = 2\n{sections}", data.display().to_string());
    let path = dir.join("run.cfg");
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn validate_shipped_config() {
    let dir = tempfile::tempdir().unwrap();
    let out = scale(&["validate", "--config", shipped_config_path().to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
}

#[test]
fn validate_reports_named_violations() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(dir.path(), "", "[training]\nlearning_rate = -0.5\n");
    let out = scale(&["validate", "--config", &cfg], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stdout).contains("training.learning_rate"));

    let cfg = write_cfg(dir.path(), "", "[protocol]\nelection_weights = [0.15, 0.15, 0.15, 0.15, 0.15, 0.15]\n");
    let out = scale(&["validate", "--config", &cfg], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stdout).contains("protocol.election_weights"));
}

#[test]
fn run_rejects_bad_config_with_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(dir.path(), "", "[protocol]\nmax_gap = 0\n");
    let out = scale(&["run", "--config", &cfg], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("protocol.max_gap"));
}

#[test]
fn missing_dataset_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = scale(&["run", "--dataset", "nowhere.data"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn divergence_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(dir.path(), "rounds = 3\n", "[training]\nlearning_rate = 1e308\nepochs = 3\n");
    let out = scale(&["run", "--mode", "baseline", "--config", &cfg, "--output-dir", "o"], dir.path());
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn baseline_summary_counts_every_upload() {
    let dir = tempfile::tempdir().unwrap();
    let out = scale(&["run", "--mode", "baseline", "--config", shipped_config_path().to_str().unwrap(), "--output-dir", "o"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.lines().any(|l| l.starts_with("baseline:") && l.contains("updates=3000")), "{stdout}");
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("o/report.json")).unwrap()).unwrap();
    assert!(report["scale"].is_null());
}

#[test]
fn env_var_sets_default_output_dir() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(dir.path(), "rounds = 2\n", "");
    let out = Command::new(env!("CARGO_BIN_EXE_scale"))
        .args(["run", "--mode", "scale", "--config", &cfg])
        .current_dir(dir.path())
        .env("SCALE_OUTPUT_DIR", dir.path().join("from-env"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert!(dir.path().join("from-env/table1.csv").exists());
}

#[test]
fn report_rerenders_the_same_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(dir.path(), "rounds = 4\n", "");
    assert_eq!(scale(&["run", "--config", &cfg, "--output-dir", "o"], dir.path()).status.code(), Some(0));
    let out = scale(&["report", "o/report.json", "--output", "again.csv"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let a = std::fs::read_to_string(dir.path().join("o/table1.csv")).unwrap();
    let b = std::fs::read_to_string(dir.path().join("again.csv")).unwrap();
    assert_eq!(a, b);
    let mut rows = a.lines();
    assert_eq!(rows.next(), Some("run,nodes,rounds,updates_fl,acc_fl,updates_scale,acc_scale"));
    assert_eq!(a.lines().count(), 1 + 2 + 1);
    assert!(a.lines().last().unwrap().starts_with("Total,20,4,80,"));
}
