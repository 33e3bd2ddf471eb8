use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use htl::bounds::{
    bound_report, class_prediction_bound, empirical_rademacher, EstimateMode, RademacherClass,
    DEFAULT_DRAWS,
};
use htl::dataset::RowPolicy;
use htl::erm_solver::{fit, mean_loss, SolverOptions};
use htl::harness::experiments::{loss_class_complexity_check, run, ComplexityCheckSpec};
use htl::harness::io::{
    load_dataset, load_model, load_sources, load_toml, save_dataset, save_model, save_sources,
    to_json_string, ModelFile,
};
use htl::harness::{ExperimentConfig, ExperimentKind};
use htl::linalg::norm2;
use htl::source_ensemble::{tune_beta, TuneOptions};
use htl::synth::{generate, TaskSpec};
use htl::{Dataset, HtlError, LossSpec, Matrix, RegularizerSpec, Result, SourceEnsemble};

#[derive(Parser)]
#[command(name = "htl", version, about = "Hypothesis transfer learning via regularized ERM")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic task: training/holdout CSVs and a source file.
    Gen {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out_train: PathBuf,
        #[arg(long)]
        out_holdout: Option<PathBuf>,
        #[arg(long)]
        out_sources: Option<PathBuf>,
    },
    /// Train a target model on a dataset, optionally on top of sources.
    Train {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        model: ModelArgs,
        /// Source weights, comma-separated; e₁ when sources are given and this is absent.
        #[arg(long, value_delimiter = ',')]
        beta: Option<Vec<f64>>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Choose β by minimizing the bound-based objective, then train.
    TuneBeta {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        model: ModelArgs,
        /// Budget on ‖β‖².
        #[arg(long)]
        rho: f64,
        #[arg(long, default_value_t = 50)]
        iterations: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate every bound for a trained model on its training data (JSON to stdout).
    Bounds {
        #[arg(long)]
        model: PathBuf,
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, default_value_t = 3.0)]
        eta: f64,
        /// Budget ρ on ‖β‖²; ‖β‖² of the model when absent.
        #[arg(long)]
        rho: Option<f64>,
        /// Class risk bound r; the empirical source risk is plugged in when absent.
        #[arg(long)]
        r: Option<f64>,
        /// Comparator radius τ for the excess-risk bound.
        #[arg(long, default_value_t = 1.0)]
        tau: f64,
        /// Also estimate the linear class complexity by Monte Carlo.
        #[arg(long)]
        estimate: bool,
    },
    /// Empirical Rademacher complexity of a linear or a loss class.
    Rademacher {
        #[arg(long, value_enum)]
        class: ClassKind,
        /// Dataset (linear class).
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long, default_value_t = 1.0)]
        label_bound: f64,
        /// Radius of the linear class ‖w‖² ≤ radius.
        #[arg(long, default_value_t = 1.0)]
        radius: f64,
        /// Task spec (loss class).
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long, default_value_t = 0.1)]
        lambda: f64,
        #[arg(long, default_value_t = 1.0)]
        rho: f64,
        #[arg(long, default_value_t = 1000)]
        members: usize,
        #[arg(long, conflicts_with = "draws")]
        exact: bool,
        #[arg(long)]
        draws: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run an experiment suite from a TOML config.
    Experiment {
        #[arg(value_enum)]
        name: ExperimentName,
        #[arg(long)]
        config: PathBuf,
        /// Output prefix (overrides the config).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads (overrides the config).
        #[arg(long)]
        parallelism: Option<usize>,
    },
}

#[derive(Args)]
struct DataArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = 1.0)]
    label_bound: f64,
    /// Scale rows with ‖x‖ > 1 instead of rejecting them.
    #[arg(long)]
    normalize: bool,
    /// Source files (a source object or an array of them each).
    #[arg(long, num_args = 1..)]
    sources: Vec<PathBuf>,
}

#[derive(Args)]
struct ModelArgs {
    #[arg(long, default_value = "square")]
    loss: LossSpec,
    #[arg(long, default_value_t = 0.1)]
    lambda: f64,
    #[arg(long, value_enum, default_value_t = RegKind::SqL2)]
    reg: RegKind,
    #[arg(long, default_value_t = 1.0)]
    reg_scale: f64,
    /// Model file whose w is the center of a biased regularizer.
    #[arg(long)]
    reg_center: Option<PathBuf>,
    /// ℓ₁ weight of the elastic-net regularizer.
    #[arg(long, default_value_t = 0.0)]
    reg_l1: f64,
    /// Use accelerated proximal gradient.
    #[arg(long)]
    accelerated: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum RegKind {
    SqL2,
    Elastic,
}

#[derive(Clone, Copy, ValueEnum)]
enum ClassKind {
    Linear,
    Loss,
}

#[derive(Clone, Copy, ValueEnum)]
#[value(rename_all = "snake_case")]
enum ExperimentName {
    Rates,
    Perfect,
    BoundValidity,
    Excess,
    Tune,
}

impl From<ExperimentName> for ExperimentKind {
    fn from(n: ExperimentName) -> Self {
        match n {
            ExperimentName::Rates => ExperimentKind::Rates,
            ExperimentName::Perfect => ExperimentKind::Perfect,
            ExperimentName::BoundValidity => ExperimentKind::BoundValidity,
            ExperimentName::Excess => ExperimentKind::Excess,
            ExperimentName::Tune => ExperimentKind::Tune,
        }
    }
}

impl ModelArgs {
    fn regularizer(&self) -> Result<RegularizerSpec> {
        let reg = match (self.reg, &self.reg_center) {
            (RegKind::SqL2, None) => RegularizerSpec::sq_l2(self.reg_scale),
            (RegKind::SqL2, Some(path)) => {
                RegularizerSpec::biased_sq_l2(self.reg_scale, load_model(path)?.w)
            }
            (RegKind::Elastic, None) => RegularizerSpec::elastic(self.reg_scale, self.reg_l1),
            (RegKind::Elastic, Some(_)) => {
                return Err(HtlError::invalid("--reg-center applies to sq_l2 only"))
            }
        };
        reg.validate()?;
        Ok(reg)
    }

    fn solver(&self) -> SolverOptions<f64> {
        SolverOptions::default().accelerated(self.accelerated)
    }
}

impl DataArgs {
    fn load(&self) -> Result<Dataset> {
        let policy = if self.normalize {
            RowPolicy::Normalize
        } else {
            RowPolicy::Reject
        };
        load_dataset(&self.data, self.label_bound, policy)
    }

    /// Sources from files, else the dataset's own prediction columns, else none.
    fn ensemble(&self, data: &Dataset) -> Result<Option<SourceEnsemble>> {
        if !self.sources.is_empty() {
            return load_sources(&self.sources).map(Some);
        }
        if data.source_preds().is_some() {
            let id = self.data.display().to_string();
            return SourceEnsemble::from_dataset_columns(data, &id).map(Some);
        }
        Ok(None)
    }
}

fn source_matrix(ens: Option<&SourceEnsemble>, data: &Dataset) -> Result<Matrix> {
    match ens {
        Some(e) => e.prediction_matrix(data),
        None => Matrix::from_row_major(data.len(), 0, Vec::new()),
    }
}

fn write_json<T: serde::Serialize>(value: &T) -> Result<()> {
    println!("{}", to_json_string(value)?);
    Ok(())
}

fn save_with_meta(path: &Path, model: &htl::TargetModel, report: &htl::TrainReport) -> Result<()> {
    let mut file = ModelFile::from_model(model);
    if let serde_json::Value::Object(map) = serde_json::to_value(report).map_err(|e| HtlError::Io(std::io::Error::other(e)))? {
        file.meta.insert("train_report".into(), serde_json::Value::Object(map));
    }
    save_model(path, &file)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Gen {
            spec,
            out_train,
            out_holdout,
            out_sources,
        } => {
            let spec: TaskSpec = load_toml(&spec)?;
            let task = generate(&spec)?;
            save_dataset(&out_train, &task.train)?;
            if let Some(p) = out_holdout {
                save_dataset(&p, &task.holdout)?;
            }
            if let Some(p) = out_sources {
                save_sources(&p, &task.ensemble)?;
            }
            log::info!("generated {} training and {} holdout rows", task.train.len(), task.holdout.len());
            Ok(())
        }
        Command::Train {
            data,
            model,
            beta,
            out,
        } => {
            let ds = data.load()?;
            let ens = data.ensemble(&ds)?;
            let preds = source_matrix(ens.as_ref(), &ds)?;
            let beta = match (beta, preds.cols()) {
                (Some(b), _) => b,
                (None, 0) => Vec::new(),
                (None, n) => {
                    let mut b = vec![0.0; n];
                    b[0] = 1.0;
                    b
                }
            };
            htl::error::check_dim("beta", preds.cols(), beta.len())?;
            let offsets = preds.mul_vec(&beta);
            let reg = model.regularizer()?;
            let (mut m, report) = fit(&ds, model.loss, &reg, model.lambda, &offsets, &model.solver())?;
            m.beta = beta;
            save_with_meta(&out, &m, &report)?;
            write_json(&report)
        }
        Command::TuneBeta {
            data,
            model,
            rho,
            iterations,
            out,
        } => {
            let ds = data.load()?;
            let ens = data
                .ensemble(&ds)?
                .ok_or_else(|| HtlError::invalid("tune-beta needs --sources or source columns"))?;
            let reg = model.regularizer()?;
            let opts = TuneOptions {
                iterations,
                solver: model.solver(),
                ..TuneOptions::default()
            };
            let res = tune_beta(&ens, &ds, model.loss, &reg, model.lambda, rho, &opts)?;
            save_with_meta(&out, &res.model, &res.report)?;
            write_json(&serde_json::json!({
                "beta": res.combination.beta(),
                "objective": res.objective,
                "history": res.history,
                "report": res.report,
            }))
        }
        Command::Bounds {
            model,
            data,
            eta,
            rho,
            r,
            tau,
            estimate,
        } => {
            let m = load_model(&model)?.into_model();
            let ds = data.load()?;
            let ens = data.ensemble(&ds)?;
            let preds = source_matrix(ens.as_ref(), &ds)?;
            htl::error::check_dim("beta", preds.cols(), m.beta.len())?;
            let offsets = preds.mul_vec(&m.beta);
            let r_src_hat = mean_loss(m.loss, &offsets, ds.labels())?;
            let c = ens.as_ref().map_or(0.0, |e| e.vector_bound());
            let sigma = m.reg.sigma();
            // rows are validated to the unit ball
            let b = 1.0;
            let label_bound = ds.label_bound();
            let p = class_prediction_bound(b, 1.0 / m.lambda, r_src_hat, sigma, norm2(&m.beta), c);
            let inputs = htl::BoundInputs {
                h: m.loss.smoothness(label_bound),
                sigma,
                m: ds.len(),
                lambda: m.lambda,
                rho: rho.unwrap_or_else(|| m.beta.iter().map(|v| v * v).sum()),
                b,
                c,
                eta,
                r_src_hat,
                r: r.unwrap_or(r_src_hat),
                big_m: m.loss.range_bound(p, label_bound),
            };
            let est = if estimate {
                let radius = 1.0 / m.lambda * r_src_hat;
                Some(empirical_rademacher(
                    &RademacherClass::Linear {
                        x: ds.features(),
                        scale: m.reg.scale(),
                        radius,
                    },
                    EstimateMode::Auto {
                        draws: DEFAULT_DRAWS,
                        seed: 0,
                    },
                )?)
            } else {
                None
            };
            let mut report = bound_report(&inputs, est, tau, m.loss.lipschitz_bound(p, label_bound))?;
            report.r_is_estimate = r.is_none();
            write_json(&report)
        }
        Command::Rademacher {
            class,
            data,
            label_bound,
            radius,
            spec,
            lambda,
            rho,
            members,
            exact,
            draws,
            seed,
        } => {
            let draws = draws.unwrap_or(DEFAULT_DRAWS);
            let mode = if exact {
                EstimateMode::Exact
            } else {
                EstimateMode::MonteCarlo { draws, seed }
            };
            match class {
                ClassKind::Linear => {
                    let path = data.ok_or_else(|| HtlError::invalid("--class linear needs --data"))?;
                    let ds = load_dataset(&path, label_bound, RowPolicy::Reject)?;
                    let est = empirical_rademacher(
                        &RademacherClass::Linear {
                            x: ds.features(),
                            scale: 1.0,
                            radius,
                        },
                        mode,
                    )?;
                    write_json(&est)
                }
                ClassKind::Loss => {
                    let path = spec.ok_or_else(|| HtlError::invalid("--class loss needs --spec"))?;
                    if exact {
                        return Err(HtlError::invalid("--class loss supports Monte Carlo only"));
                    }
                    let mut task: TaskSpec = load_toml(&path)?;
                    task.seed ^= seed;
                    let check = loss_class_complexity_check(&ComplexityCheckSpec {
                        task,
                        lambda,
                        rho,
                        reg_scale: 1.0,
                        members,
                        draws,
                    })?;
                    write_json(&serde_json::json!({
                        "estimate": check.mc_mean,
                        "std_error": check.std_error,
                        "bound": check.bound,
                        "r_hat_max": check.r_hat_max,
                        "within_bound": check.holds(),
                    }))
                }
            }
        }
        Command::Experiment {
            name,
            config,
            out,
            parallelism,
        } => {
            let mut cfg: ExperimentConfig = load_toml(&config)?;
            let kind = ExperimentKind::from(name);
            if cfg.experiment != kind {
                return Err(HtlError::invalid(format!(
                    "config is for `{}`, not `{}`",
                    cfg.experiment.name(),
                    kind.name()
                )));
            }
            if out.is_some() {
                cfg.output = out;
            }
            if let Some(p) = parallelism {
                cfg.parallelism = p;
            }
            let result = run(&cfg)?;
            for c in &result.checks {
                println!("{} {}: {}", if c.passed { "ok  " } else { "FAIL" }, c.name, c.detail);
            }
            for f in &result.fits {
                if let Some(fit) = f.fit {
                    println!("slope {}: {:.4}", f.name, fit.slope);
                }
            }
            println!("failures: {} of {} rows", result.failures, result.rows.len());
            Ok(())
        }
    }
}
