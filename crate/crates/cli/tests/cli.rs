use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn radial_nls(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_radial-nls")).args(args).output().expect("spawn radial-nls")
}

fn run_into(dir: &Path, args: &[&str]) -> Output {
    let mut full: Vec<&str> = args.to_vec();
    let out = dir.to_str().unwrap();
    full.extend(["--out", out]);
    radial_nls(&full)
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

/// Header and rows of a CSV file.
fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap().split(',').map(str::to_string).collect();
    let rows = lines.map(|l| l.split(',').map(str::to_string).collect()).collect();
    (header, rows)
}

fn column(path: &Path, name: &str) -> Vec<f64> {
    let (header, rows) = read_csv(path);
    let j = header.iter().position(|h| h == name).unwrap();
    rows.iter().map(|r| r[j].parse().unwrap()).collect()
}

fn sign_changes(u: &[f64]) -> usize {
    let signs: Vec<f64> = u.iter().filter(|v| **v != 0.0).map(|v| v.signum()).collect();
    signs.windows(2).filter(|w| w[0] != w[1]).count()
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("run.toml");
    fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn one_dimensional_ground_state_amplitude() {
    let tmp = TempDir::new().unwrap();
    let out = run_into(tmp.path(), &["shoot", "--d", "1", "--R", "30", "--N", "2048"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let summary = read_json(&tmp.path().join("summary.json"));
    let alpha = summary["alpha"].as_f64().unwrap();
    assert!((alpha - 2f64.sqrt()).abs() < 1e-8, "alpha = {alpha}");
    assert_eq!(summary["node_count"], 0);

    let manifest = read_json(&tmp.path().join("manifest.json"));
    assert_eq!(manifest["command"], "shoot");
    assert_eq!(manifest["config"]["problem"]["d"], 1);
    let files: Vec<&str> = manifest["files"].as_array().unwrap().iter().map(|f| f.as_str().unwrap()).collect();
    assert!(files.contains(&"solution.csv") && files.contains(&"summary.json"));
}

#[test]
fn excited_state_has_requested_sign_changes() {
    let tmp = TempDir::new().unwrap();
    let out = run_into(tmp.path(), &["shoot", "--d", "3", "--p", "2", "--nodes", "4", "--R", "40", "--N", "4096"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let u = column(&tmp.path().join("solution.csv"), "u");
    assert_eq!(u.len(), 4096);
    assert_eq!(sign_changes(&u), 4);
}

#[test]
fn supercritical_power_is_rejected() {
    let tmp = TempDir::new().unwrap();
    let out = run_into(tmp.path(), &["shoot", "--d", "3", "--p", "7"]);
    assert_eq!(out.status.code(), Some(2));
    let err: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"], "SupercriticalPower");
    assert!(err["message"].as_str().unwrap().contains("p out of subcritical range"));
    assert_eq!(read_json(&tmp.path().join("error.json")), err);
}

#[test]
fn nehari_run_meets_its_tolerance() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        "[problem]\nR = 20.0\nN = 512\n[method]\nnodes = 1\n[method.nehari]\nupdate = \"semi-implicit\"\n",
    );
    let out = run_into(&tmp.path().join("o"), &["nehari", "--config", &cfg, "--eps", "1e-9"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let crit = column(&tmp.path().join("o/history.csv"), "crit");
    assert!(*crit.last().unwrap() <= 1e-9);
    let u = column(&tmp.path().join("o/solution.csv"), "u");
    assert_eq!(sign_changes(&u), 1);
    let summary = read_json(&tmp.path().join("o/summary.json"));
    assert_eq!(summary["nehari"]["termination"], "Converged");
}

#[test]
fn exhausted_iterations_still_leave_history() {
    let tmp = TempDir::new().unwrap();
    let out = run_into(tmp.path(), &["nehari", "--N", "256", "--R", "20", "--max-iter", "50"]);
    assert_eq!(out.status.code(), Some(2));
    let err: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"], "MaxIterExceeded");
    assert_eq!(column(&tmp.path().join("history.csv"), "crit").len(), 50);
}

#[test]
fn combined_refines_shooting_result() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "[method.nehari]\nupdate = \"semi-implicit\"\n");
    let out = run_into(
        &tmp.path().join("o"),
        &["combined", "--config", &cfg, "--nodes", "2", "--R", "20", "--N", "512"],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let summary = read_json(&tmp.path().join("o/summary.json"));
    assert_eq!(summary["nehari"]["nodes"], 2);
    let u = column(&tmp.path().join("o/solution.csv"), "u");
    assert_eq!(sign_changes(&u), 2);
}

#[test]
fn study_without_blocks_is_an_error() {
    let tmp = TempDir::new().unwrap();
    let out = run_into(tmp.path(), &["study"]);
    assert_eq!(out.status.code(), Some(2));
    let err: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"], "NoStudy");
    assert_eq!(err["message"], "no study requested");
}

#[test]
fn small_amplitude_study() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "[problem]\nN = 2048\n[study.amplitudes]\nk_max = 6\nR = 40.0\n");
    let out = run_into(&tmp.path().join("o"), &["study", "--config", &cfg]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let alpha = column(&tmp.path().join("o/amplitudes.csv"), "alpha");
    assert_eq!(alpha.len(), 7);
    assert!((alpha[0] - 2.2062008646).abs() < 1e-6);
    assert!(alpha.windows(2).all(|w| w[1] > w[0]));
}

#[test]
fn outputs_are_byte_identical_across_runs() {
    let tmp = TempDir::new().unwrap();
    let args = ["shoot", "--nodes", "3", "--R", "25", "--N", "1024"];
    for name in ["a", "b"] {
        assert!(run_into(&tmp.path().join(name), &args).status.success());
    }
    for file in ["solution.csv", "summary.json"] {
        let a = fs::read(tmp.path().join("a").join(file)).unwrap();
        let b = fs::read(tmp.path().join("b").join(file)).unwrap();
        assert!(a == b, "{file} differs");
    }
}

#[test]
fn csv_values_round_trip_through_summary() {
    let tmp = TempDir::new().unwrap();
    assert!(run_into(tmp.path(), &["shoot", "--d", "1", "--N", "512"]).status.success());
    let summary = read_json(&tmp.path().join("summary.json"));
    let alpha = summary["alpha"].as_f64().unwrap();
    let u = column(&tmp.path().join("solution.csv"), "u");
    let r = column(&tmp.path().join("solution.csv"), "r");
    assert_eq!(r[0], 0.0);
    assert_eq!(u[0], alpha);
    assert_eq!(r[1], 30.0 / 512.0);
    let text = fs::read_to_string(tmp.path().join("solution.csv")).unwrap();
    let first: Vec<&str> = text.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(format!("{:.16e}", first[1].parse::<f64>().unwrap()), first[1]);
}

#[test]
fn usage_errors_exit_with_one() {
    assert_eq!(radial_nls(&["bogus"]).status.code(), Some(1));
    assert_eq!(radial_nls(&["shoot", "--N", "many"]).status.code(), Some(1));
    assert_eq!(radial_nls(&["--help"]).status.code(), Some(0));
}

#[test]
fn invalid_config_is_reported() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "[problem]\nq = 1\n");
    let out = radial_nls(&["shoot", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(2));
    let err: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"], "InvalidConfig");
}
