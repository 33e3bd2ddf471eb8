mod common;

use std::path::Path;
use std::process::Command;

use common::{random_dataset, random_matrix, rng};
use htl::dataset::RowPolicy;
use htl::erm_solver::{fit_with_sources, SolverOptions};
use htl::harness::io::{
    load_dataset, load_model, model_from_str, parse_dataset_csv, parse_toml, save_dataset,
    save_model, save_sources, load_sources, ModelFile,
};
use htl::harness::ExperimentConfig;
use htl::{HtlError, LossSpec, RegularizerSpec};
use rand::Rng;

#[test]
fn dataset_round_trip_is_bit_exact() {
    let mut r = rng(1);
    let data = random_dataset(&mut r, 25, 4, LossSpec::Square);
    let preds = random_matrix(&mut r, 25, 2, 1.0);
    let data = data.with_source_preds(preds).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.csv");
    save_dataset(&path, &data).unwrap();
    let back = load_dataset(&path, 1.0, RowPolicy::Reject).unwrap();
    assert_eq!(back, data);
}

#[test]
fn model_round_trip_is_bit_exact() {
    let mut r = rng(2);
    let data = random_dataset(&mut r, 30, 3, LossSpec::Logistic);
    let preds = random_matrix(&mut r, 30, 2, 1.0);
    let beta = vec![r.random_range(-1.0..1.0), r.random_range(-1.0..1.0)];
    let (model, _) = fit_with_sources(&data, &preds, &beta, LossSpec::Logistic, &RegularizerSpec::sq_l2(0.7), 0.03, &SolverOptions::default()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.json");
    save_model(&path, &ModelFile::from_model(&model)).unwrap();
    let back = load_model(&path).unwrap().into_model();
    assert_eq!(back, model);
}

#[test]
fn sources_round_trip() {
    let mut r = rng(3);
    let w = random_matrix(&mut r, 3, 2, 1.0);
    let ens = htl::SourceEnsemble::from_weight_matrix(&w).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.json");
    save_sources(&path, &ens).unwrap();
    assert_eq!(load_sources(&[&path]).unwrap(), ens);
    std::fs::write(dir.path().join("one.json"), r#"{"kind": "linear", "w": [0.5, 0.5, 0.0]}"#).unwrap();
    assert_eq!(load_sources(&[dir.path().join("one.json")]).unwrap().len(), 1);
}

#[test]
fn out_of_ball_rows_are_rejected_or_normalized() {
    let text = "y,x1,x2\n0.5,0.6,0.8\n0.1,3.0,4.0\n";
    match parse_dataset_csv(text.as_bytes(), 1.0, RowPolicy::Reject) {
        Err(HtlError::InvalidRow { row, .. }) => assert_eq!(row, 1),
        other => panic!("expected InvalidRow, got {other:?}"),
    }
    let d = parse_dataset_csv(text.as_bytes(), 1.0, RowPolicy::Normalize).unwrap();
    assert!((d.x(1)[0] - 0.6).abs() < 1e-15 && (d.x(1)[1] - 0.8).abs() < 1e-15);
}

#[test]
fn labels_outside_range_are_clipped() {
    let d = parse_dataset_csv("y,x1\n2.5,0.1\n-3,0.2\n".as_bytes(), 1.0, RowPolicy::Reject).unwrap();
    assert_eq!(d.labels(), &[1.0, -1.0]);
}

#[test]
fn malformed_inputs_report_positions() {
    match model_from_str("{\n  \"version\": 1,\n  \"loss\": \"cubic\"\n}") {
        Err(HtlError::Parse { line, .. }) => assert_eq!(line, 3),
        other => panic!("{other:?}"),
    }
    let cfg = "experiment = \"rates\"\nm_grid = [1, 2]\ntrials = 2\nbogus = 1\n[task]\nd = 2\nm = 2\nmode = \"regression_square\"\n";
    match parse_toml::<ExperimentConfig>(cfg) {
        Err(HtlError::Parse { line, message, .. }) => {
            assert_eq!(line, 4);
            assert!(message.contains("bogus"), "{message}");
        }
        other => panic!("{other:?}"),
    }
}

fn htl(args: &[&str], cwd: &Path) -> String {
    let out = Command::new(env!("CARGO_BIN_EXE_htl")).args(args).current_dir(cwd).output().unwrap();
    assert!(out.status.success(), "htl {args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

#[test]
fn cli_pipeline_generates_trains_and_bounds() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    std::fs::write(
        p.join("task.toml"),
        "d = 4\nm = 60\nm_holdout = 500\nnoise_std = 0.05\nsignal_norm = 0.5\nsource_count = 2\nsource_quality = 0.1\nseed = 3\nmode = \"regression_square\"\n",
    )
    .unwrap();
    htl(&["gen", "--spec", "task.toml", "--out-train", "t.csv", "--out-holdout", "h.csv", "--out-sources", "s.json"], p);
    let report = htl(&["train", "--data", "t.csv", "--sources", "s.json", "--loss", "square", "--lambda", "0.1", "--out", "m.json"], p);
    let report: serde_json::Value = serde_json::from_str(&report).unwrap();
    assert_eq!(report["certificate_a"], true);
    let bounds = htl(&["bounds", "--model", "m.json", "--data", "t.csv", "--sources", "s.json", "--eta", "3", "--estimate"], p);
    let bounds: serde_json::Value = serde_json::from_str(&bounds).unwrap();
    for key in ["rad_bound_smooth", "excess_gap", "u_src"] {
        let v = bounds[key].as_f64().unwrap();
        assert!(v.is_finite() && v >= 0.0, "{key} = {v}");
    }
    assert!(bounds["gen_gap"]["relaxed"].as_f64().unwrap() >= 2.0 * bounds["rad_bound_smooth"].as_f64().unwrap());
    let tuned = htl(&["tune-beta", "--data", "t.csv", "--sources", "s.json", "--rho", "1", "--out", "tuned.json"], p);
    let tuned: serde_json::Value = serde_json::from_str(&tuned).unwrap();
    assert_eq!(tuned["beta"].as_array().unwrap().len(), 2);
    let rad = htl(&["rademacher", "--class", "linear", "--data", "t.csv", "--draws", "200"], p);
    let rad: serde_json::Value = serde_json::from_str(&rad).unwrap();
    assert_eq!(rad["exact"], false);
    let rad = htl(&["rademacher", "--class", "loss", "--spec", "task.toml", "--members", "50", "--draws", "100"], p);
    let rad: serde_json::Value = serde_json::from_str(&rad).unwrap();
    assert_eq!(rad["within_bound"], true);
}

#[test]
fn cli_reports_errors_with_nonzero_exit() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.csv"), "y,x1\n0.1,5\n").unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_htl"))
        .args(["train", "--data", "bad.csv", "--out", "m.json"])
        .current_dir(dir.path())
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("row 0"));
}
