use std::path::PathBuf;

use htl::harness::experiments::{run, trial_seed, violation_threshold};
use htl::harness::io::load_toml;
use htl::harness::{ExperimentConfig, ExperimentKind};
use htl::synth::{Task, TaskMode};
use htl::HtlError;

fn config(name: &str) -> ExperimentConfig {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("configs").join(format!("{name}.toml"));
    load_toml(&path).unwrap()
}

fn small(name: &str) -> ExperimentConfig {
    let mut cfg = config(name);
    cfg.trials = 4;
    cfg.task.m_holdout = 2000;
    cfg
}

#[test]
fn shipped_configs_parse_and_validate() {
    for (name, kind) in [
        ("rates", ExperimentKind::Rates),
        ("perfect", ExperimentKind::Perfect),
        ("bound_validity", ExperimentKind::BoundValidity),
        ("excess", ExperimentKind::Excess),
        ("tune", ExperimentKind::Tune),
    ] {
        let cfg = config(name);
        assert_eq!(cfg.experiment, kind);
        cfg.validate().unwrap();
    }
}

#[test]
fn results_files_follow_the_schema() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small("rates");
    cfg.m_grid = vec![32, 64, 128, 256];
    cfg.output = Some(dir.path().join("out/rates"));
    let res = run(&cfg).unwrap();
    assert_eq!(res.rows.len(), 4 * 4 * 2);
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("out/rates.json")).unwrap()).unwrap();
    for key in ["experiment", "config", "rows", "aggregates", "fits", "sign_tests", "checks", "failures"] {
        assert!(json.get(key).is_some(), "missing {key}");
    }
    assert!(json["config"].get("parallelism").is_none());
    let row = &json["rows"][0];
    for key in ["variant", "m", "trial", "seed", "gap", "bound", "train_risk", "holdout_risk"] {
        assert!(row.get(key).is_some(), "row missing {key}");
    }
    let long = std::fs::read_to_string(dir.path().join("out/rates_long.csv")).unwrap();
    assert_eq!(long.lines().next().unwrap(), "experiment,variant,m,trial,gap,bound,seed");
    assert_eq!(long.lines().count(), 1 + res.rows.len());
    let wide = std::fs::read_to_string(dir.path().join("out/rates.csv")).unwrap();
    assert_eq!(wide.lines().count(), 1 + res.rows.len());
}

#[test]
fn rows_can_be_regenerated_from_their_seed() {
    let cfg = small("bound_validity");
    let res = run(&cfg).unwrap();
    let row = res.rows.iter().find(|r| r.trial == 2 && r.m == cfg.m_grid[1]).unwrap();
    assert_eq!(row.seed, trial_seed(cfg.task.seed, 2));
    let mut spec = cfg.task.clone();
    spec.seed = row.seed;
    spec.source_quality = row.source_quality;
    let task = Task::new(&spec).unwrap();
    let train = task.train(row.m).unwrap();
    assert_eq!(train.len(), row.m);
}

#[test]
fn perfect_source_preconditions_fail_fast() {
    let mut cfg = small("perfect");
    cfg.task.source_quality = 0.1;
    assert!(matches!(run(&cfg), Err(HtlError::Experiment(msg)) if msg.contains("precondition")));
    let mut cfg = small("perfect");
    cfg.task.mode = TaskMode::RegressionSquare;
    assert!(matches!(run(&cfg), Err(HtlError::Experiment(msg)) if msg.contains("precondition")));
}

#[test]
fn short_grid_reports_slopes_without_asserting() {
    let mut cfg = small("rates");
    cfg.m_grid = vec![32, 64];
    let res = run(&cfg).unwrap();
    let check = res.check("slopes").unwrap();
    assert!(!check.passed);
    assert!(res.fit("bad_full").is_some());
}

#[test]
fn zero_radius_comparator_gives_source_only_models() {
    let mut cfg = small("excess");
    cfg.lambda = htl::harness::LambdaPolicy::ExcessOptimal { tau: 0.0 };
    let res = run(&cfg).unwrap();
    for r in &res.rows {
        assert_eq!(r.omega_w, Some(0.0));
        assert!(r.excess.unwrap().abs() <= 1e-12, "{r:?}");
    }
}

#[test]
fn tune_experiment_runs() {
    let res = run(&small("tune")).unwrap();
    assert_eq!(res.failures, 0);
    assert!(res.rows.iter().all(|r| r.beta_norm.unwrap() <= 1.0 + 1e-12));
}

#[test]
fn invalid_configs_are_rejected() {
    let mut cfg = small("rates");
    cfg.m_grid = vec![64, 32];
    assert!(run(&cfg).is_err());
    let mut cfg = small("rates");
    cfg.beta = Some(vec![1.0, 0.0]);
    assert!(run(&cfg).is_err());
}

#[test]
fn violation_threshold_values() {
    let p = (-3.0f64).exp();
    assert!((violation_threshold(3.0, 200) - (p + 2.0 * (p * (1.0 - p) / 200.0).sqrt())).abs() < 1e-15);
    assert_eq!(violation_threshold(0.0, 10), 1.0);
}

#[test]
fn results_json_reads_back() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small("excess");
    cfg.lambda = htl::harness::LambdaPolicy::ExcessOptimal { tau: 0.0 };
    cfg.output = Some(dir.path().join("excess"));
    let res = run(&cfg).unwrap();
    let text = std::fs::read_to_string(dir.path().join("excess.json")).unwrap();
    let mut back: htl::harness::ExperimentResult = serde_json::from_str(&text).unwrap();
    back.config.output = cfg.output.clone();
    assert_eq!(back.rows, res.rows);
}
