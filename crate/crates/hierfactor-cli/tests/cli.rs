//! End-to-end tests of the `hierfactor` binary: every subcommand, the report
//! formats, config-file precedence, determinism, and the exit-code contract.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hierfactor"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary should launch")
}

fn run_ok(dir: &Path, args: &[&str]) -> Output {
    let out = run(dir, args);
    assert!(
        out.status.success(),
        "command {:?} failed: {}",
        args,
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn json_report(dir: &Path, args: &[&str]) -> serde_json::Value {
    let out = run_ok(dir, args);
    serde_json::from_slice(&out.stdout).expect("report should be valid JSON")
}

fn table<'a>(report: &'a serde_json::Value, title: &str) -> &'a serde_json::Value {
    report["tables"]
        .as_array()
        .unwrap()
        .iter()
        .find(|t| t["title"] == title)
        .unwrap_or_else(|| panic!("report lacks table {title:?}"))
}

fn cell(table: &serde_json::Value, row: usize, col: usize) -> String {
    table["rows"][row][col].as_str().unwrap().to_string()
}

#[test]
fn simulate_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["simulate", "--L", "3", "--T", "8", "--seed", "1", "--out"];
    run_ok(dir.path(), &[&args[..], &["first.csv"]].concat());
    run_ok(dir.path(), &[&args[..], &["second.csv"]].concat());
    let first = fs::read(dir.path().join("first.csv")).unwrap();
    let second = fs::read(dir.path().join("second.csv")).unwrap();
    assert_eq!(first, second);
    let first_truth = fs::read(dir.path().join("first.truth.json")).unwrap();
    let second_truth = fs::read(dir.path().join("second.truth.json")).unwrap();
    assert_eq!(first_truth, second_truth);
}

#[test]
fn noiseless_round_trip_recovers_slopes_and_shares() {
    let dir = tempfile::tempdir().unwrap();
    run_ok(
        dir.path(),
        &[
            "simulate",
            "--L",
            "12",
            "--T",
            "16",
            "--seed",
            "2",
            "--noise-scale",
            "0",
            "--out",
            "panel.csv",
        ],
    );
    let report = json_report(
        dir.path(),
        &["fit", "--csv", "panel.csv", "--format", "json-report"],
    );
    let slopes = table(&report, "slopes");
    for row in slopes["rows"].as_array().unwrap() {
        let estimate: f64 = row[1].as_str().unwrap().parse().unwrap();
        assert!(
            (estimate - 1.0).abs() < 1e-6,
            "slope {estimate} should sit on the generating value 1"
        );
    }

    let shares = table(&report, "variance shares");
    let mut total = 0.0;
    for row in shares["rows"].as_array().unwrap() {
        let share: f64 = row[1].as_str().unwrap().parse().unwrap();
        assert!((-1e-12..=1.0 + 1e-12).contains(&share));
        total += share;
    }
    assert!((total - 1.0).abs() < 1e-8, "shares sum to {total}");
}

#[test]
fn csv_report_carries_run_identity() {
    let dir = tempfile::tempdir().unwrap();
    run_ok(
        dir.path(),
        &["simulate", "--L", "3", "--T", "8", "--seed", "4", "--out", "panel.csv"],
    );
    let out = run_ok(dir.path(), &["fit", "--csv", "panel.csv", "--format", "csv"]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("# command=fit\n"));
    assert!(text.contains("# version="));
    assert!(text.contains("# seed=0\n"));
    assert!(text.contains("# table=slopes"));
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert!(stderr.contains("fit finished"), "timing goes to stderr");
}

#[test]
fn heterogeneous_fit_reports_per_industry_slopes() {
    let dir = tempfile::tempdir().unwrap();
    run_ok(
        dir.path(),
        &["simulate", "--L", "6", "--T", "12", "--seed", "3", "--out", "panel.csv"],
    );
    let report = json_report(
        dir.path(),
        &[
            "fit",
            "--csv",
            "panel.csv",
            "--mode",
            "heterogeneous",
            "--format",
            "json-report",
        ],
    );
    let slopes = table(&report, "slopes");
    assert_eq!(
        slopes["columns"].as_array().unwrap().len(),
        3,
        "industry, variable, estimate"
    );
    assert_eq!(slopes["columns"][0], "industry");
    // Six industries and two regressors in the study design.
    assert_eq!(slopes["rows"].as_array().unwrap().len(), 12);
    let counts = table(&report, "factor counts");
    assert_eq!(cell(counts, 0, 0), "global");
    assert_eq!(counts["rows"].as_array().unwrap().len(), 7);
}

#[test]
fn duplicate_row_is_named_and_fails_validation() {
    let dir = tempfile::tempdir().unwrap();
    run_ok(
        dir.path(),
        &["simulate", "--L", "3", "--T", "8", "--seed", "1", "--out", "panel.csv"],
    );
    let path = dir.path().join("panel.csv");
    let mut text = fs::read_to_string(&path).unwrap();
    let last_row = text.trim_end().rsplit('\n').next().unwrap().to_string();
    text.push_str(&last_row);
    text.push('\n');
    fs::write(&path, text).unwrap();

    let out = run(dir.path(), &["fit", "--csv", "panel.csv"]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert!(stderr.contains("duplicate key"), "stderr: {stderr}");
}

#[test]
fn missing_input_file_fails_with_io_code() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &["fit", "--csv", "absent.csv"]);
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn degenerate_regressor_fails_with_numeric_code() {
    let dir = tempfile::tempdir().unwrap();
    let mut text = String::from("industry,country,period,y,x1\n");
    for country in ["a", "b"] {
        for period in 1..=4 {
            text.push_str(&format!("ind,{country},{period},1.5,0\n"));
        }
    }
    fs::write(dir.path().join("flat.csv"), text).unwrap();
    let out = run(dir.path(), &["fit", "--csv", "flat.csv"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn unknown_flag_fails_with_validation_code() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &["fit", "--bogus"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn mc_study_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let args = [
        "mc-study",
        "--L",
        "3,4",
        "--T",
        "8",
        "--reps",
        "2",
        "--seed",
        "7",
        "--format",
        "json-report",
        "--out",
    ];
    run_ok(dir.path(), &[&args[..], &["first.json"]].concat());
    run_ok(dir.path(), &[&args[..], &["second.json"]].concat());
    let first = fs::read(dir.path().join("first.json")).unwrap();
    let second = fs::read(dir.path().join("second.json")).unwrap();
    assert_eq!(first, second);

    let report: serde_json::Value = serde_json::from_slice(&first).unwrap();
    let cells = table(&report, "cells");
    assert_eq!(cells["rows"].as_array().unwrap().len(), 2, "one row per grid cell");
    assert_eq!(cell(cells, 0, 3), "2", "both replications completed");
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("run.toml"),
        "seed = 3\nl = 3\nt = 8\nreps = 2\nformat = \"json-report\"\n",
    )
    .unwrap();
    let report = json_report(
        dir.path(),
        &["mc-study", "--config", "run.toml", "--seed", "9"],
    );
    assert_eq!(report["seed"], 9, "flag wins over the config file");
    assert_eq!(report["settings"]["reps"], "2", "config fills unset flags");
}

#[test]
fn bootstrap_report_is_coherent() {
    let dir = tempfile::tempdir().unwrap();
    run_ok(
        dir.path(),
        &["simulate", "--L", "8", "--T", "12", "--seed", "5", "--out", "panel.csv"],
    );
    let report = json_report(
        dir.path(),
        &[
            "bootstrap-ci",
            "--csv",
            "panel.csv",
            "--bootstrap-reps",
            "19",
            "--seed",
            "11",
            "--format",
            "json-report",
        ],
    );
    assert_eq!(report["settings"]["block_length"], "2");
    assert_eq!(report["settings"]["bootstrap_reps"], "19");

    let intervals = table(&report, "confidence intervals");
    let rows = intervals["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 2, "one row per regressor");
    for row in rows {
        let lower: f64 = row[2].as_str().unwrap().parse().unwrap();
        let upper: f64 = row[3].as_str().unwrap().parse().unwrap();
        assert!(lower <= upper, "interval [{lower}, {upper}] is ordered");
    }
    table(&report, "factor counts");
}
