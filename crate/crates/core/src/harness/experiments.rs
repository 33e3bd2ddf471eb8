//! Experiment suites: learning-rate regimes, the perfect-source collapse,
//! bound validity, excess-risk ordering and β-tuning.
//!
//! Trials are independent work items; each derives its seed from the base seed
//! and its index, so results do not depend on the worker count.

use std::fs;
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, ExperimentKind, LambdaPolicy};
use super::io::to_json_string;
use super::stats::{log_log_slope, mean, median, sign_test_less, SignTest, SlopeFit};
use crate::bounds::{
    class_prediction_bound, empirical_rademacher, excess_gap_bound, excess_lambda_star,
    gen_gap_bound, rad_bound_smooth, BoundInputs, EstimateMode, GapBound, RademacherClass,
};
use crate::dataset::Dataset;
use crate::erm_solver::{
    constrained_risk_minimizer, fit_with_sources, mean_loss, SolverOptions, TargetModel,
    TrainReport,
};
use crate::error::{HtlError, Result};
use crate::linalg::{dot, norm1, norm2, Matrix};
use crate::losses::LossSpec;
use crate::regularizers::RegularizerSpec;
use crate::source_ensemble::{tune_beta, SourceEnsemble, TuneOptions};
use crate::synth::{splitmix64, stream_rng, Task, TaskMode, TaskSpec};

/// Floor applied to λ* when the source is perfect (λ* = 0).
pub const LAMBDA_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub experiment: String,
    pub variant: String,
    pub m: usize,
    pub trial: usize,
    pub seed: u64,
    pub source_quality: f64,
    /// None when w is pinned at 0 (a zero-radius comparator class).
    pub lambda: Option<f64>,
    pub train_risk: Option<f64>,
    pub holdout_risk: Option<f64>,
    pub gap: Option<f64>,
    /// Relaxed generalization bound (or the excess-risk bound in `excess`).
    pub bound: Option<f64>,
    pub bound_tight: Option<f64>,
    pub omega_w: Option<f64>,
    pub source_train_risk: Option<f64>,
    pub source_holdout_risk: Option<f64>,
    pub excess: Option<f64>,
    pub beta_norm: Option<f64>,
    pub error: Option<String>,
}

impl ResultRow {
    fn new(kind: ExperimentKind, variant: &str, m: usize, trial: usize, seed: u64, gamma: f64) -> Self {
        ResultRow {
            experiment: kind.name().to_string(),
            variant: variant.to_string(),
            m,
            trial,
            seed,
            source_quality: gamma,
            lambda: None,
            train_risk: None,
            holdout_risk: None,
            gap: None,
            bound: None,
            bound_tight: None,
            omega_w: None,
            source_train_risk: None,
            source_holdout_risk: None,
            excess: None,
            beta_norm: None,
            error: None,
        }
    }

    fn failed(mut self, e: &HtlError) -> Self {
        self.error = Some(e.to_string());
        self
    }

    pub fn ok(&self) -> bool {
        self.error.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub variant: String,
    pub m: usize,
    pub n_ok: usize,
    pub mean_gap: f64,
    pub mean_abs_gap: f64,
    pub median_gap: f64,
    pub mean_bound: Option<f64>,
    pub median_excess: Option<f64>,
    pub violations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedFit {
    pub name: String,
    pub fit: Option<SlopeFit>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedSignTest {
    pub name: String,
    pub m: usize,
    pub test: SignTest,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub experiment: String,
    pub config: ExperimentConfig,
    pub rows: Vec<ResultRow>,
    pub aggregates: Vec<Aggregate>,
    pub fits: Vec<NamedFit>,
    pub sign_tests: Vec<NamedSignTest>,
    pub checks: Vec<Check>,
    pub failures: usize,
}

impl ExperimentResult {
    pub fn fit(&self, name: &str) -> Option<SlopeFit> {
        self.fits.iter().find(|f| f.name == name).and_then(|f| f.fit)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn all_checks_pass(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

pub fn trial_seed(base: u64, trial: usize) -> u64 {
    splitmix64(base ^ splitmix64(trial as u64))
}

pub fn run(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    cfg.validate()?;
    let result = match cfg.experiment {
        ExperimentKind::Rates => run_rates(cfg),
        ExperimentKind::Perfect => run_perfect(cfg),
        ExperimentKind::BoundValidity => run_bound_validity(cfg),
        ExperimentKind::Excess => run_excess(cfg),
        ExperimentKind::Tune => run_tune(cfg),
    }?;
    if let Some(prefix) = &cfg.output {
        write_outputs(&result, prefix)?;
    }
    Ok(result)
}

/// Runs `trial` for every trial index on a pool of `cfg.parallelism` workers
/// and returns all rows sorted by (variant, m, trial).
fn run_trials<F>(cfg: &ExperimentConfig, trial: F) -> Result<Vec<ResultRow>>
where
    F: Fn(usize, u64) -> Vec<ResultRow> + Sync,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.parallelism)
        .build()
        .map_err(|e| HtlError::Experiment(format!("cannot build worker pool: {e}")))?;
    let base = cfg.task.seed;
    let mut rows: Vec<ResultRow> = pool.install(|| {
        (0..cfg.trials)
            .into_par_iter()
            .flat_map_iter(|t| trial(t, trial_seed(base, t)))
            .collect()
    });
    rows.sort_by(|a, b| {
        (a.variant.as_str(), a.m, a.trial).cmp(&(b.variant.as_str(), b.m, b.trial))
    });
    Ok(rows)
}

fn check_failures(cfg: &ExperimentConfig, rows: &[ResultRow]) -> Result<usize> {
    let failures = rows.iter().filter(|r| !r.ok()).count();
    if !rows.is_empty() && failures as f64 > cfg.failure_cap * rows.len() as f64 {
        let first = rows.iter().find_map(|r| r.error.clone()).unwrap_or_default();
        return Err(HtlError::Experiment(format!(
            "{failures} of {} trials failed (cap {}); first failure: {first}",
            rows.len(),
            cfg.failure_cap
        )));
    }
    Ok(failures)
}

fn task_spec(cfg: &ExperimentConfig, seed: u64, gamma: f64) -> TaskSpec {
    TaskSpec {
        seed,
        source_quality: gamma,
        ..cfg.task.clone()
    }
}

/// A trained model evaluated on its training set and the holdout.
struct Evaluation {
    model: TargetModel<f64>,
    report: TrainReport<f64>,
    holdout_risk: f64,
    source_holdout_risk: f64,
}

fn evaluate(
    train: &Dataset<f64>,
    train_preds: &Matrix<f64>,
    holdout: &Dataset<f64>,
    holdout_preds: &Matrix<f64>,
    beta: &[f64],
    loss: LossSpec,
    reg: &RegularizerSpec<f64>,
    lambda: f64,
) -> Result<Evaluation> {
    let (model, report) = fit_with_sources(train, train_preds, beta, loss, reg, lambda, &SolverOptions::default())?;
    if !report.certificate_a || !report.certificate_b {
        return Err(HtlError::Experiment(format!(
            "certificate check failed (A: {}, B: {})",
            report.certificate_a, report.certificate_b
        )));
    }
    let holdout_risk = model.risk_estimate(holdout, Some(holdout_preds))?;
    let source_holdout_risk = mean_loss(loss, &holdout_preds.mul_vec(beta), holdout.labels())?;
    Ok(Evaluation {
        model,
        report,
        holdout_risk,
        source_holdout_risk,
    })
}

/// Bound inputs for the certified class around a trained model.
pub fn class_bound_inputs(
    report: &TrainReport<f64>,
    ensemble: &SourceEnsemble<f64>,
    beta: &[f64],
    loss: LossSpec,
    label_bound: f64,
    reg: &RegularizerSpec<f64>,
    lambda: f64,
    rho: f64,
    m: usize,
    eta: f64,
    r_plugin: f64,
) -> BoundInputs<f64> {
    let h = loss.smoothness(label_bound);
    let sigma = reg.sigma();
    let b = 1.0;
    let c = ensemble.vector_bound();
    let r_hat = report.source_empirical_risk;
    let p = class_prediction_bound(b, 1.0 / lambda, r_hat, sigma, norm2(beta), c);
    BoundInputs {
        h,
        sigma,
        m,
        lambda,
        rho,
        b,
        c,
        eta,
        r_src_hat: r_hat,
        r: r_plugin,
        big_m: loss.range_bound(p, label_bound),
    }
}

fn gap_bound(inputs: &BoundInputs<f64>) -> Result<GapBound<f64>> {
    gen_gap_bound(rad_bound_smooth(inputs), inputs.r, inputs.big_m, inputs.m, inputs.eta)
}

fn fill_eval(row: &mut ResultRow, ev: &Evaluation, lambda: f64) {
    row.lambda = lambda.is_finite().then_some(lambda);
    row.train_risk = Some(ev.report.empirical_risk);
    row.holdout_risk = Some(ev.holdout_risk);
    row.gap = Some(ev.holdout_risk - ev.report.empirical_risk);
    row.omega_w = Some(ev.report.omega_w);
    row.source_train_risk = Some(ev.report.source_empirical_risk);
    row.source_holdout_risk = Some(ev.source_holdout_risk);
    row.beta_norm = Some(norm2(&ev.model.beta));
}

fn fixed_lambda(cfg: &ExperimentConfig) -> Result<f64> {
    match cfg.lambda {
        LambdaPolicy::Fixed { value } => Ok(value),
        LambdaPolicy::ExcessOptimal { .. } => Err(HtlError::invalid(format!(
            "experiment `{}` needs a fixed lambda",
            cfg.experiment.name()
        ))),
    }
}

fn aggregate(rows: &[ResultRow]) -> Vec<Aggregate> {
    let mut out: Vec<Aggregate> = Vec::new();
    let mut i = 0;
    while i < rows.len() {
        let (v, m) = (&rows[i].variant, rows[i].m);
        let mut j = i;
        while j < rows.len() && &rows[j].variant == v && rows[j].m == m {
            j += 1;
        }
        let group: Vec<&ResultRow> = rows[i..j].iter().filter(|r| r.ok()).collect();
        let gaps: Vec<f64> = group.iter().filter_map(|r| r.gap).collect();
        let abs: Vec<f64> = gaps.iter().map(|g| g.abs()).collect();
        let bounds: Vec<f64> = group.iter().filter_map(|r| r.bound).collect();
        let excess: Vec<f64> = group.iter().filter_map(|r| r.excess).collect();
        let violations = group
            .iter()
            .filter(|r| matches!((r.gap, r.bound), (Some(g), Some(b)) if g > b))
            .count();
        out.push(Aggregate {
            variant: v.clone(),
            m,
            n_ok: group.len(),
            mean_gap: mean(&gaps),
            mean_abs_gap: mean(&abs),
            median_gap: median(&gaps),
            mean_bound: (!bounds.is_empty()).then(|| mean(&bounds)),
            median_excess: (!excess.is_empty()).then(|| median(&excess)),
            violations,
        });
        i = j;
    }
    out
}

fn finish(
    cfg: &ExperimentConfig,
    rows: Vec<ResultRow>,
    fits: Vec<NamedFit>,
    sign_tests: Vec<NamedSignTest>,
    checks: Vec<Check>,
    failures: usize,
) -> ExperimentResult {
    let aggregates = aggregate(&rows);
    ExperimentResult {
        experiment: cfg.experiment.name().to_string(),
        config: cfg.clone(),
        rows,
        aggregates,
        fits,
        sign_tests,
        checks,
        failures,
    }
}

// ---------------------------------------------------------------- rates

pub const RATES_GOOD: &str = "good";
pub const RATES_BAD: &str = "bad";

/// Good source (β from the config, γ = `rates.good_quality`) versus bad source
/// (β = 0) on the same tasks. Slopes are fitted to log(mean |gap|) against
/// log(m); the signed mean is fitted too and reported.
pub fn run_rates(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    let lambda = fixed_lambda(cfg)?;
    let loss = cfg.task.mode.loss();
    let reg = RegularizerSpec::sq_l2(cfg.reg_scale);
    let gamma = cfg.rates.good_quality;
    let beta_good = cfg.beta();
    let beta_bad = vec![0.0; beta_good.len()];
    let rows = run_trials(cfg, |t, seed| {
        let spec = task_spec(cfg, seed, gamma);
        let setup = (|| -> Result<_> {
            let task = Task::new(&spec)?;
            let holdout = task.holdout(spec.m_holdout)?;
            let ens = task.ensemble()?;
            let hp = ens.prediction_matrix(&holdout)?;
            Ok((task, holdout, ens, hp))
        })();
        let mut out = Vec::new();
        for &m in &cfg.m_grid {
            for (variant, beta) in [(RATES_GOOD, &beta_good), (RATES_BAD, &beta_bad)] {
                let row = ResultRow::new(cfg.experiment, variant, m, t, seed, gamma);
                let res = setup.as_ref().map_err(clone_err).and_then(|(task, holdout, ens, hp)| {
                    let train = task.train(m)?;
                    let tp = ens.prediction_matrix(&train)?;
                    let ev = evaluate(&train, &tp, holdout, hp, beta, loss, &reg, lambda)?;
                    let inputs = class_bound_inputs(
                        &ev.report, ens, beta, loss, spec.label_bound, &reg, lambda, cfg.rho, m,
                        cfg.eta, ev.source_holdout_risk,
                    );
                    Ok((ev, gap_bound(&inputs)?))
                });
                out.push(match res {
                    Ok((ev, gb)) => {
                        let mut row = row;
                        fill_eval(&mut row, &ev, lambda);
                        row.bound = Some(gb.relaxed);
                        row.bound_tight = Some(gb.tight);
                        row
                    }
                    Err(e) => row.failed(&e),
                });
            }
        }
        out
    })?;
    let failures = check_failures(cfg, &rows)?;
    let aggregates = aggregate(&rows);

    let series = |variant: &str, small: bool, signed: bool| -> Option<SlopeFit> {
        let mut pts: Vec<(usize, f64)> = aggregates
            .iter()
            .filter(|a| a.variant == variant)
            .filter(|a| !small || a.m <= cfg.rates.small_m_max)
            .map(|a| (a.m, if signed { a.mean_gap } else { a.mean_abs_gap }))
            .collect();
        if cfg.rates.trim && !small && pts.len() > 4 {
            pts.remove(0);
            pts.pop();
        }
        let (ms, ys): (Vec<usize>, Vec<f64>) = pts.into_iter().unzip();
        log_log_slope(&ms, &ys)
    };
    let fits = vec![
        NamedFit { name: "bad_full".into(), fit: series(RATES_BAD, false, false) },
        NamedFit { name: "good_small".into(), fit: series(RATES_GOOD, true, false) },
        NamedFit { name: "bad_small".into(), fit: series(RATES_BAD, true, false) },
        NamedFit { name: "good_full".into(), fit: series(RATES_GOOD, false, false) },
        NamedFit { name: "bad_full_signed".into(), fit: series(RATES_BAD, false, true) },
        NamedFit { name: "good_full_signed".into(), fit: series(RATES_GOOD, false, true) },
    ];
    let get = |n: &str| fits.iter().find(|f| f.name == n).and_then(|f| f.fit);
    let mut checks = Vec::new();
    match (get("bad_full"), get("good_small"), get("bad_small")) {
        (Some(bad), Some(good), bad_small) if bad.points >= 4 && good.points >= 4 => {
            checks.push(Check {
                name: "bad_slope".into(),
                passed: (bad.slope + 0.5).abs() <= 0.15,
                detail: format!("bad-source slope {:.4} (target −0.5 ± 0.15)", bad.slope),
            });
            let mut detail = format!(
                "good-source small-m slope {:.4} vs bad-source slope {:.4} − 0.2",
                good.slope, bad.slope
            );
            if let Some(bs) = bad_small {
                detail.push_str(&format!(" (bad small-m slope {:.4})", bs.slope));
            }
            checks.push(Check {
                name: "good_faster".into(),
                passed: good.slope <= bad.slope - 0.2,
                detail,
            });
        }
        _ => checks.push(Check {
            name: "slopes".into(),
            passed: false,
            detail: "fewer than 4 usable grid points; slopes reported without assertion".into(),
        }),
    }
    Ok(finish(cfg, rows, fits, Vec::new(), checks, failures))
}

fn clone_err(e: &HtlError) -> HtlError {
    HtlError::Experiment(e.to_string())
}

// ---------------------------------------------------------------- perfect

/// Perfect source in classification mode: R̂(h^src_β) = 0 forces ŵ = 0 and
/// zero risk on train and holdout alike.
pub fn run_perfect(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    let lambda = fixed_lambda(cfg)?;
    if cfg.task.mode != TaskMode::ClassificationSquaredHinge {
        return Err(HtlError::Experiment(
            "precondition: the perfect-source experiment needs classification_squared_hinge mode".into(),
        ));
    }
    if cfg.task.source_quality != 0.0 {
        return Err(HtlError::Experiment(format!(
            "precondition: the perfect-source experiment needs source_quality = 0, got {}",
            cfg.task.source_quality
        )));
    }
    let beta = cfg.beta();
    if beta.iter().enumerate().any(|(i, &b)| b != if i == 0 { 1.0 } else { 0.0 }) {
        return Err(HtlError::Experiment("precondition: the perfect-source experiment needs β = e₁".into()));
    }
    let loss = LossSpec::SquaredHinge;
    let reg = RegularizerSpec::sq_l2(cfg.reg_scale);
    let rows = run_trials(cfg, |t, seed| {
        let spec = task_spec(cfg, seed, 0.0);
        let mut out = Vec::new();
        let setup = (|| -> Result<_> {
            let task = Task::new(&spec)?;
            let holdout = task.holdout(spec.m_holdout)?;
            let ens = task.ensemble()?;
            let hp = ens.prediction_matrix(&holdout)?;
            Ok((task, holdout, ens, hp))
        })();
        for &m in &cfg.m_grid {
            let row = ResultRow::new(cfg.experiment, "perfect", m, t, seed, 0.0);
            let res = setup.as_ref().map_err(clone_err).and_then(|(task, holdout, ens, hp)| {
                let train = task.train(m)?;
                let tp = ens.prediction_matrix(&train)?;
                let ev = evaluate(&train, &tp, holdout, hp, &beta, loss, &reg, lambda)?;
                let inputs = class_bound_inputs(
                    &ev.report, ens, &beta, loss, spec.label_bound, &reg, lambda, cfg.rho, m, cfg.eta,
                    ev.source_holdout_risk,
                );
                Ok((ev, gap_bound(&inputs)?))
            });
            out.push(match res {
                Ok((ev, gb)) => {
                    let mut row = row;
                    fill_eval(&mut row, &ev, lambda);
                    row.bound = Some(gb.relaxed);
                    row.bound_tight = Some(gb.tight);
                    if ev.report.source_empirical_risk != 0.0
                        || ev.model.w.iter().any(|&v| v != 0.0)
                        || ev.report.empirical_risk != 0.0
                        || ev.holdout_risk != 0.0
                    {
                        row.error = Some(format!(
                            "collapse violated: R̂src = {}, ‖ŵ‖ = {}, train risk = {}, holdout risk = {}",
                            ev.report.source_empirical_risk,
                            norm2(&ev.model.w),
                            ev.report.empirical_risk,
                            ev.holdout_risk
                        ));
                    }
                    row
                }
                Err(e) => row.failed(&e),
            });
        }
        out
    })?;
    if let Some(bad) = rows.iter().find(|r| !r.ok()) {
        return Err(HtlError::Experiment(format!(
            "perfect-source collapse failed at m = {}, trial {} (seed {}): {}",
            bad.m,
            bad.trial,
            bad.seed,
            bad.error.as_deref().unwrap_or("")
        )));
    }
    let n = rows.len();
    let checks = vec![Check {
        name: "collapse".into(),
        passed: true,
        detail: format!("ŵ = 0 and train risk = holdout risk = 0 in {n}/{n} runs"),
    }];
    Ok(finish(cfg, rows, Vec::new(), Vec::new(), checks, 0))
}

// ---------------------------------------------------------------- bound validity

/// e^{−η} + 2·√(e^{−η}(1 − e^{−η})/n): the allowed violation fraction.
pub fn violation_threshold(eta: f64, n: usize) -> f64 {
    let p = (-eta).exp();
    p + 2.0 * (p * (1.0 - p) / n as f64).sqrt()
}

fn gamma_variant(g: f64) -> String {
    format!("gamma={g}")
}

/// Per trial: the realized gap R_holdout − R̂ against the relaxed
/// generalization bound with the loss-class complexity bound plugged in.
pub fn run_bound_validity(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    let lambda = fixed_lambda(cfg)?;
    let loss = cfg.task.mode.loss();
    let reg = RegularizerSpec::sq_l2(cfg.reg_scale);
    let gammas = if cfg.gammas.is_empty() {
        vec![cfg.task.source_quality]
    } else {
        cfg.gammas.clone()
    };
    let beta = cfg.beta();
    let rows = run_trials(cfg, |t, seed| {
        let mut out = Vec::new();
        for &g in &gammas {
            let spec = task_spec(cfg, seed, g);
            let setup = (|| -> Result<_> {
                let task = Task::new(&spec)?;
                let holdout = task.holdout(spec.m_holdout)?;
                let ens = task.ensemble()?;
                let hp = ens.prediction_matrix(&holdout)?;
                Ok((task, holdout, ens, hp))
            })();
            for &m in &cfg.m_grid {
                let row = ResultRow::new(cfg.experiment, &gamma_variant(g), m, t, seed, g);
                let res = setup.as_ref().map_err(clone_err).and_then(|(task, holdout, ens, hp)| {
                    let train = task.train(m)?;
                    let tp = ens.prediction_matrix(&train)?;
                    let ev = evaluate(&train, &tp, holdout, hp, &beta, loss, &reg, lambda)?;
                    let inputs = class_bound_inputs(
                        &ev.report, ens, &beta, loss, spec.label_bound, &reg, lambda, cfg.rho, m,
                        cfg.eta, ev.source_holdout_risk,
                    );
                    Ok((ev, gap_bound(&inputs)?))
                });
                out.push(match res {
                    Ok((ev, gb)) => {
                        let mut row = row;
                        fill_eval(&mut row, &ev, lambda);
                        row.bound = Some(gb.relaxed);
                        row.bound_tight = Some(gb.tight);
                        row
                    }
                    Err(e) => row.failed(&e),
                });
            }
        }
        out
    })?;
    let failures = check_failures(cfg, &rows)?;
    let aggregates = aggregate(&rows);
    let mut checks = Vec::new();
    for a in &aggregates {
        let frac = a.violations as f64 / a.n_ok.max(1) as f64;
        let thr = violation_threshold(cfg.eta, a.n_ok.max(1));
        let name = format!("violations[{}, m={}]", a.variant, a.m);
        if cfg.eta > 0.0 {
            checks.push(Check {
                passed: frac <= thr,
                detail: format!("{} of {} violated (fraction {frac:.4}, allowed {thr:.4})", a.violations, a.n_ok),
                name,
            });
        } else {
            checks.push(Check {
                passed: true,
                detail: format!("η = 0: {} of {} violated, not asserted", a.violations, a.n_ok),
                name,
            });
        }
    }
    Ok(finish(cfg, rows, Vec::new(), Vec::new(), checks, failures))
}

// ---------------------------------------------------------------- excess

/// Excess risk R_holdout(ĥ) − min_{Ω(w) ≤ τ} R_holdout(h_{w,β}) across source
/// qualities, with λ from the excess-risk bound (floored at 1e-8). The same
/// seed drives w*, the source perturbation directions and the samples for
/// every γ, so the comparison across γ uses common random numbers.
pub fn run_excess(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    let loss = cfg.task.mode.loss();
    let reg = RegularizerSpec::sq_l2(cfg.reg_scale);
    let sigma = reg.sigma();
    let tau = match cfg.lambda {
        LambdaPolicy::ExcessOptimal { tau } => tau,
        LambdaPolicy::Fixed { .. } => cfg.excess.tau,
    };
    let gammas = cfg.excess.gammas.clone();
    if gammas.windows(2).any(|w| w[0] >= w[1]) {
        return Err(HtlError::invalid("excess gammas must be strictly increasing"));
    }
    let beta = cfg.beta();
    let comparator_opts = SolverOptions {
        grad_tol: 1e-10,
        ..SolverOptions::default()
    };
    let rows = run_trials(cfg, |t, seed| {
        let mut out = Vec::new();
        for &g in &gammas {
            let spec = task_spec(cfg, seed, g);
            let setup = (|| -> Result<_> {
                let task = Task::new(&spec)?;
                let holdout = task.holdout(spec.m_holdout)?;
                let ens = task.ensemble()?;
                let hp = ens.prediction_matrix(&holdout)?;
                let offsets = hp.mul_vec(&beta);
                let (_, best) =
                    constrained_risk_minimizer(&holdout, &offsets, loss, &reg, tau, &comparator_opts)?;
                let r_src = mean_loss(loss, &offsets, holdout.labels())?;
                Ok((task, holdout, ens, hp, best, r_src))
            })();
            for &m in &cfg.m_grid {
                let row = ResultRow::new(cfg.experiment, &gamma_variant(g), m, t, seed, g);
                let res = setup.as_ref().map_err(clone_err).and_then(|(task, holdout, ens, hp, best, r_src)| {
                    let train = task.train(m)?;
                    let tp = ens.prediction_matrix(&train)?;
                    let p = ens.output_bound() * norm1(&beta) + (2.0 * tau / sigma).sqrt();
                    let inputs = BoundInputs {
                        h: loss.smoothness(spec.label_bound),
                        sigma,
                        m,
                        lambda: 1.0,
                        rho: cfg.rho,
                        b: 1.0,
                        c: ens.vector_bound(),
                        eta: cfg.eta,
                        r_src_hat: *r_src,
                        r: *r_src,
                        big_m: loss.range_bound(p, spec.label_bound),
                    };
                    let (lambda, bound) = match cfg.lambda {
                        LambdaPolicy::Fixed { value } => (value, None),
                        LambdaPolicy::ExcessOptimal { .. } if tau > 0.0 => (
                            excess_lambda_star(&inputs, tau)?.max(LAMBDA_FLOOR),
                            Some(excess_gap_bound(&inputs, tau)?),
                        ),
                        // a zero-radius class is {0}: the model is the source combination itself
                        LambdaPolicy::ExcessOptimal { .. } => (f64::INFINITY, None),
                    };
                    let ev = if lambda.is_finite() {
                        evaluate(&train, &tp, holdout, hp, &beta, loss, &reg, lambda)?
                    } else {
                        source_only(&train, &tp, holdout, hp, &beta, loss, &reg)?
                    };
                    Ok((ev, lambda, bound, *best))
                });
                out.push(match res {
                    Ok((ev, lambda, bound, best)) => {
                        let mut row = row;
                        fill_eval(&mut row, &ev, lambda);
                        row.excess = Some(ev.holdout_risk - best);
                        row.bound = bound;
                        row
                    }
                    Err(e) => row.failed(&e),
                });
            }
        }
        out
    })?;
    let failures = check_failures(cfg, &rows)?;

    let mut sign_tests = Vec::new();
    let mut checks = Vec::new();
    for &m in &cfg.m_grid {
        // excess per γ, aligned by trial (rows are sorted by trial within a group)
        let per_gamma: Vec<Vec<Option<f64>>> = gammas
            .iter()
            .map(|&g| {
                let v = gamma_variant(g);
                let mut col = vec![None; cfg.trials];
                for r in rows.iter().filter(|r| r.variant == v && r.m == m && r.ok()) {
                    col[r.trial] = r.excess;
                }
                col
            })
            .collect();
        let medians: Vec<f64> = per_gamma
            .iter()
            .map(|c| median(&c.iter().flatten().copied().collect::<Vec<_>>()))
            .collect();
        let ordered = medians.windows(2).all(|w| w[0] < w[1]);
        let mut all_significant = true;
        for k in 0..gammas.len().saturating_sub(1) {
            let (a, b): (Vec<f64>, Vec<f64>) = per_gamma[k]
                .iter()
                .zip(&per_gamma[k + 1])
                .filter_map(|(x, y)| Some(((*x)?, (*y)?)))
                .unzip();
            let test = sign_test_less(&a, &b);
            all_significant &= test.p_value < 0.05;
            sign_tests.push(NamedSignTest {
                name: format!("{} < {}", gamma_variant(gammas[k]), gamma_variant(gammas[k + 1])),
                m,
                test,
            });
        }
        checks.push(Check {
            name: format!("ordered[m={m}]"),
            passed: ordered && all_significant,
            detail: format!(
                "median excess {medians:?}; adjacent sign tests significant at 5%: {all_significant}"
            ),
        });
    }
    Ok(finish(cfg, rows, Vec::new(), sign_tests, checks, failures))
}

/// The model with w = 0 (only reachable in the limit λ → ∞).
fn source_only(
    train: &Dataset<f64>,
    train_preds: &Matrix<f64>,
    holdout: &Dataset<f64>,
    holdout_preds: &Matrix<f64>,
    beta: &[f64],
    loss: LossSpec,
    reg: &RegularizerSpec<f64>,
) -> Result<Evaluation> {
    let src_train = mean_loss(loss, &train_preds.mul_vec(beta), train.labels())?;
    let src_hold = mean_loss(loss, &holdout_preds.mul_vec(beta), holdout.labels())?;
    let model = TargetModel {
        w: vec![0.0; train.dim()],
        beta: beta.to_vec(),
        loss,
        reg: reg.clone(),
        lambda: f64::INFINITY,
    };
    let report = TrainReport {
        objective: src_train,
        empirical_risk: src_train,
        source_empirical_risk: src_train,
        omega_w: 0.0,
        iterations: 0,
        grad_mapping_norm: 0.0,
        stop: crate::erm_solver::StopReason::ClosedForm,
        certificate_a: true,
        certificate_b: true,
    };
    Ok(Evaluation {
        model,
        report,
        holdout_risk: src_hold,
        source_holdout_risk: src_hold,
    })
}

// ---------------------------------------------------------------- tune

/// β chosen by bound minimization versus the configured fixed β.
pub fn run_tune(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    let lambda = fixed_lambda(cfg)?;
    let loss = cfg.task.mode.loss();
    let reg = RegularizerSpec::sq_l2(cfg.reg_scale);
    let gamma = cfg.task.source_quality;
    let beta_fixed = cfg.beta();
    let opts = TuneOptions {
        iterations: cfg.tune_iterations,
        ..TuneOptions::default()
    };
    let rows = run_trials(cfg, |t, seed| {
        let spec = task_spec(cfg, seed, gamma);
        let setup = (|| -> Result<_> {
            let task = Task::new(&spec)?;
            let holdout = task.holdout(spec.m_holdout)?;
            let ens = task.ensemble()?;
            let hp = ens.prediction_matrix(&holdout)?;
            Ok((task, holdout, ens, hp))
        })();
        let mut out = Vec::new();
        for &m in &cfg.m_grid {
            for variant in ["tuned", "fixed"] {
                let row = ResultRow::new(cfg.experiment, variant, m, t, seed, gamma);
                let res = setup.as_ref().map_err(clone_err).and_then(|(task, holdout, ens, hp)| {
                    let train = task.train(m)?;
                    let tp = ens.prediction_matrix(&train)?;
                    let beta = if variant == "tuned" {
                        tune_beta(ens, &train, loss, &reg, lambda, cfg.rho, &opts)?
                            .combination
                            .beta()
                            .to_vec()
                    } else {
                        beta_fixed.clone()
                    };
                    let ev = evaluate(&train, &tp, holdout, hp, &beta, loss, &reg, lambda)?;
                    let inputs = class_bound_inputs(
                        &ev.report, ens, &beta, loss, spec.label_bound, &reg, lambda, cfg.rho, m,
                        cfg.eta, ev.source_holdout_risk,
                    );
                    Ok((ev, gap_bound(&inputs)?))
                });
                out.push(match res {
                    Ok((ev, gb)) => {
                        let mut row = row;
                        fill_eval(&mut row, &ev, lambda);
                        row.bound = Some(gb.relaxed);
                        row.bound_tight = Some(gb.tight);
                        row
                    }
                    Err(e) => row.failed(&e),
                });
            }
        }
        out
    })?;
    let failures = check_failures(cfg, &rows)?;
    Ok(finish(cfg, rows, Vec::new(), Vec::new(), Vec::new(), failures))
}

// ---------------------------------------------------------------- loss-class complexity

/// Settings for one Monte Carlo check of the loss-class complexity bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexityCheckSpec {
    pub task: TaskSpec,
    pub lambda: f64,
    pub rho: f64,
    pub reg_scale: f64,
    pub members: usize,
    pub draws: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComplexityCheck {
    pub mc_mean: f64,
    pub std_error: f64,
    pub bound: f64,
    /// Largest R̂_S(h^src_β) over the sampled β, at which the bound is evaluated.
    pub r_hat_max: f64,
}

impl ComplexityCheck {
    pub fn holds(&self) -> bool {
        self.mc_mean <= self.bound + 3.0 * self.std_error
    }
}

fn ball_sample<R: Rng>(rng: &mut R, dim: usize, radius: f64) -> Vec<f64> {
    let g: Vec<f64> = (0..dim).map(|_| rng.sample(rand_distr::StandardNormal)).collect();
    let n = norm2(&g).max(1e-300);
    let r = radius * rng.random::<f64>().powf(1.0 / dim as f64);
    g.iter().map(|v| v * r / n).collect()
}

/// Samples members (w, β) of the certified class — ‖β‖² ≤ ρ,
/// s‖w‖² ≤ R̂_S(h^src_β)/λ and R̂_S(h_{w,β}) ≤ R̂_S(h^src_β) — and estimates the
/// empirical Rademacher complexity of their loss class by Monte Carlo. The
/// estimate is a lower bound on the complexity of the full class.
pub fn loss_class_complexity_check(spec: &ComplexityCheckSpec) -> Result<ComplexityCheck> {
    let task = Task::new(&spec.task)?;
    let train = task.train(spec.task.m)?;
    let ens = task.ensemble()?;
    let preds = ens.prediction_matrix(&train)?;
    let loss = spec.task.mode.loss();
    let reg = RegularizerSpec::sq_l2(spec.reg_scale);
    let m = train.len();
    let n = ens.len();
    let d = train.dim();
    let mut rng = stream_rng(spec.task.seed, 3);
    let mut values = Vec::with_capacity(spec.members * m);
    let mut r_hat_max: f64 = 0.0;
    let y = train.labels();
    for _ in 0..spec.members {
        let beta = ball_sample(&mut rng, n, spec.rho.sqrt());
        let offsets = preds.mul_vec(&beta);
        let r_src = mean_loss(loss, &offsets, y)?;
        r_hat_max = r_hat_max.max(r_src);
        let radius = (r_src / spec.lambda / spec.reg_scale).sqrt();
        let mut w = ball_sample(&mut rng, d, radius);
        let risk_at = |w: &[f64], t: f64| -> f64 {
            (0..m)
                .map(|i| loss.value_unchecked(t * dot(train.x(i), w) + offsets[i], y[i]))
                .sum::<f64>()
                / m as f64
        };
        // keep R̂(h_{w,β}) ≤ R̂(h^src_β): flip to the descent side, then shrink
        let probe = 1e-6;
        if risk_at(&w, probe) > r_src {
            w.iter_mut().for_each(|v| *v = -*v);
        }
        let mut t = 1.0;
        if risk_at(&w, 1.0) > r_src {
            let (mut lo, mut hi) = (0.0, 1.0);
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                if risk_at(&w, mid) <= r_src {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            t = lo;
        }
        for i in 0..m {
            values.push(loss.value_unchecked(t * dot(train.x(i), &w) + offsets[i], y[i]));
        }
        debug_assert!(reg.value_unchecked(&w) * t * t <= r_src / spec.lambda * (1.0 + 1e-9) + 1e-15);
    }
    let values = Matrix::from_row_major(spec.members, m, values)?;
    let est = empirical_rademacher(
        &RademacherClass::Finite { values: &values },
        EstimateMode::MonteCarlo {
            draws: spec.draws,
            seed: spec.task.seed,
        },
    )?;
    let inputs = BoundInputs {
        h: loss.smoothness(spec.task.label_bound),
        sigma: reg.sigma(),
        m,
        lambda: spec.lambda,
        rho: spec.rho,
        b: 1.0,
        c: ens.vector_bound(),
        eta: 0.0,
        r_src_hat: r_hat_max,
        r: 0.0,
        big_m: 0.0,
    };
    Ok(ComplexityCheck {
        mc_mean: est.mean,
        std_error: est.std_error.unwrap_or(0.0),
        bound: rad_bound_smooth(&inputs),
        r_hat_max,
    })
}

// ---------------------------------------------------------------- output

#[derive(Serialize)]
struct LongRow<'a> {
    experiment: &'a str,
    variant: &'a str,
    m: usize,
    trial: usize,
    gap: Option<f64>,
    bound: Option<f64>,
    seed: u64,
}

/// Writes `<prefix>.json`, `<prefix>.csv` and the plot-ready `<prefix>_long.csv`.
pub fn write_outputs(result: &ExperimentResult, prefix: &Path) -> Result<()> {
    if let Some(dir) = prefix.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    let with_ext = |suffix: &str| {
        let mut s = prefix.as_os_str().to_owned();
        s.push(suffix);
        std::path::PathBuf::from(s)
    };
    fs::write(with_ext(".json"), to_json_string(result)?)?;
    let to_io = |e: csv::Error| HtlError::Io(std::io::Error::other(e.to_string()));
    let mut w = csv::Writer::from_path(with_ext(".csv")).map_err(to_io)?;
    for r in &result.rows {
        w.serialize(r).map_err(to_io)?;
    }
    w.flush()?;
    let mut w = csv::Writer::from_path(with_ext("_long.csv")).map_err(to_io)?;
    for r in &result.rows {
        w.serialize(LongRow {
            experiment: &r.experiment,
            variant: &r.variant,
            m: r.m,
            trial: r.trial,
            gap: r.gap,
            bound: r.bound,
            seed: r.seed,
        })
        .map_err(to_io)?;
    }
    w.flush()?;
    Ok(())
}
