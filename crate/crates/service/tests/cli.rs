mod common;

use std::path::Path;
use std::process::{Command, Output};

fn cpcfc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cpcfc")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = cpcfc(args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn write_config(dir: &Path) -> String {
    let path = dir.join("config.json");
    std::fs::write(&path, serde_json::to_string(&common::small_config()).unwrap()).unwrap();
    path.display().to_string()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn unknown_flags_exit_with_one() {
    let out = cpcfc(&["simulate", "--bogus"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--bogus"));
    let out = cpcfc(&["--help"]);
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn backtest_before_training_is_a_validation_error() {
    let tmp = tempfile::tempdir().unwrap();
    let run = tmp.path().join("run");
    ok(&["simulate", "--config", &write_config(tmp.path()), "--out", s(&run)]);
    let out = cpcfc(&["backtest", "--run", s(&run)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no trained models"));

    let out = cpcfc(&["robustness", "--run", s(&run)]);
    assert_eq!(out.status.code(), Some(1));

    let out = cpcfc(&["cluster", "--run", s(&tmp.path().join("missing")), "--method", "dist"]);
    assert_ne!(out.status.code(), Some(0));
}

#[test]
fn distance_clustering_writes_clusters_json() {
    let tmp = tempfile::tempdir().unwrap();
    let run = tmp.path().join("run");
    ok(&["simulate", "--config", &write_config(tmp.path()), "--out", s(&run)]);
    let stdout = ok(&["cluster", "--run", s(&run), "--method", "dist"]);
    assert!(stdout.starts_with("distance clustering"), "{stdout}");
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(run.join("clusters.json")).unwrap()).unwrap();
    assert_eq!(json["method"], "distance");
    assert_eq!(json["labels"].as_object().unwrap().len(), 6);
}

#[test]
fn ingest_round_trips_the_simulated_csv() {
    let tmp = tempfile::tempdir().unwrap();
    let sim = tmp.path().join("sim");
    ok(&["simulate", "--config", &write_config(tmp.path()), "--out", s(&sim)]);
    let copy = tmp.path().join("copy");
    ok(&["ingest", "--csv", s(&sim.join("dataset.csv")), "--out", s(&copy)]);
    let a = std::fs::read_to_string(sim.join("dataset.csv")).unwrap();
    let b = std::fs::read_to_string(copy.join("dataset.csv")).unwrap();
    assert_eq!(a, b);
    assert!(!copy.join("ground_truth.json").exists());
}

#[test]
fn pipeline_summary_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path());
    let grid = tmp.path().join("grid.json");
    std::fs::write(&grid, r#"["SNAIVE.univar", "XGB.multivar.comp.dist", "LSTM.multivar"]"#).unwrap();
    let run_once = |name: &str| {
        let run = tmp.path().join(name);
        ok(&["simulate", "--config", &config, "--out", s(&run)]);
        ok(&["cluster", "--run", s(&run), "--method", "dist"]);
        ok(&["train", "--run", s(&run), "--grid", s(&grid)]);
        ok(&["backtest", "--run", s(&run)]);
        std::fs::read(run.join("reports/summary.csv")).unwrap()
    };
    let first = run_once("a");
    assert_eq!(first, run_once("b"));
    assert!(String::from_utf8(first).unwrap().lines().count() == 4);
}

#[test]
fn whatif_prints_a_delta_for_a_plan() {
    let run = common::trained_run();
    let store = common::open(run);
    let tmp = tempfile::tempdir().unwrap();
    let plan = tmp.path().join("plan.json");
    let last = *store.panel().dates().last().unwrap();
    let entries: Vec<_> = last
        .iter_days()
        .skip(1)
        .take(14)
        .map(|d| serde_json::json!({"date": d, "amount": 1.0e6}))
        .collect();
    std::fs::write(&plan, serde_json::to_string(&entries).unwrap()).unwrap();
    let stdout = ok(&["whatif", "--run", s(run), "--advertiser", "adv000", "--plan", s(&plan)]);
    assert!(stdout.contains("delta"), "{stdout}");

    let out = cpcfc(&[
        "whatif", "--run", s(run), "--advertiser", "adv000", "--plan", s(&plan), "--config", "TFT.univar",
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no budget channel"));
}
