mod common;

use std::fs;
use std::path::Path;

use mcurv::cli::run;
use tempfile::TempDir;

fn config(dir: &Path, h: f64, cells: usize, extra: &str) -> std::path::PathBuf {
    let path = dir.join("run.toml");
    let text = format!(
        "[problem]\nn = 2\nR = 1.0\np = 2.0\nH = {{ kind = \"constant\", value = {h:?} }}\n\n[grid]\nM = {cells}\n\n[run]\nmode = \"lambda-star\"\n{extra}\n[output]\nverbosity = 0\n"
    );
    fs::write(&path, text).unwrap();
    path
}

fn invoke(args: &[&str], cfg: &Path, out: &Path) -> i32 {
    let mut argv: Vec<std::ffi::OsString> = vec!["mcurv".into()];
    argv.extend(args.iter().map(|a| a.into()));
    argv.extend(["--config".into(), cfg.into(), "--out-dir".into(), out.into()]);
    run(argv)
}

fn report(out: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap()
}

#[test]
fn lambda_star_run_succeeds() {
    let dir = TempDir::new().unwrap();
    let cfg = config(dir.path(), 0.5, 128, "");
    let out = dir.path().join("out");
    assert_eq!(invoke(&["lambda-star"], &cfg, &out), 0);
    let json = report(&out);
    assert_eq!(json["exit_status"], 0);
    let estimate = json["lambda_star"]["bisection"]["lambda_star"].as_f64().unwrap();
    let bound = json["lambda_star"]["apriori_bound"].as_f64().unwrap();
    assert!(estimate <= bound);
    assert!((estimate - common::frozen::plane::LAMBDA_STAR).abs() < 1e-2);
    assert_eq!(json["lambda_star"]["within_bound"], true);
}

#[test]
fn inadmissible_curvature_exits_2() {
    let dir = TempDir::new().unwrap();
    let cfg = config(dir.path(), 2.0, 64, "");
    let out = dir.path().join("out");
    assert_eq!(invoke(&["lambda-star"], &cfg, &out), 2);
    assert_eq!(report(&out)["exit_status"], 2);
}

#[test]
fn usage_errors_exit_4() {
    assert_eq!(run(["mcurv", "bogus"]), 4);
    assert_eq!(run(["mcurv", "continue", "--config", "/nonexistent/run.toml"]), 4);
    let dir = TempDir::new().unwrap();
    let cfg = config(dir.path(), 0.5, 64, "");
    let out = dir.path().join("out");
    assert_eq!(invoke(&["diagnose", "--lambda", "-1"], &cfg, &out), 4);
    assert_eq!(invoke(&["continue", "--grid-m", "4"], &cfg, &out), 4);
    fs::write(&cfg, "[problem]\nn = 2\nR = 1.0\np = 0.5\n").unwrap();
    assert_eq!(invoke(&["continue"], &cfg, &out), 4);
}

#[test]
fn continue_writes_branch_files() {
    let dir = TempDir::new().unwrap();
    let cfg = config(dir.path(), 0.5, 128, "lambda_stop = 6.0\n");
    let out = dir.path().join("out");
    assert_eq!(invoke(&["continue"], &cfg, &out), 0);
    let csv = fs::read_to_string(out.join("branch.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some(mcurv::export::CSV_HEADER));
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert!(rows.len() > 20);
    assert!(rows.iter().all(|r| r.len() == 9));
    assert!(rows.iter().any(|r| r[8] == "1") && rows.iter().any(|r| r[8] == "0"));
    let svg = fs::read_to_string(out.join("branch.svg")).unwrap();
    assert!(svg.starts_with("<svg") || svg.starts_with("<?xml"));
    assert!(svg.contains("class=\"lower\"") && svg.contains("class=\"upper\"") && svg.contains("class=\"fold\""));
    let json = report(&out);
    assert!(json["fold"]["lambda_fold"].as_f64().unwrap() > 12.0);
    assert_eq!(json["outputs"].as_array().unwrap().len(), 3);
}

#[test]
fn second_and_diagnose_modes() {
    let dir = TempDir::new().unwrap();
    let cfg = config(dir.path(), 0.5, 128, "lambda_stop = 6.0\n");
    let out = dir.path().join("out");
    assert_eq!(invoke(&["second", "--lambda", "12.0"], &cfg, &out), 0);
    let second = &report(&out)["second"];
    assert!(second["u0_second"].as_f64().unwrap() > second["u0_minimal"].as_f64().unwrap());
    assert_eq!(invoke(&["diagnose", "--lambda", "6.0"], &cfg, &out), 0);
    let json = report(&out);
    assert_eq!(json["diagnostics"][0]["barrier_ok"], true);
    assert_eq!(invoke(&["second", "--lambda", "13.5"], &cfg, &out), 3);
}
