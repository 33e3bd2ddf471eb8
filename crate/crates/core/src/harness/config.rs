use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{HtlError, Result};
use crate::synth::TaskSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Rates,
    Perfect,
    BoundValidity,
    Excess,
    Tune,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Rates => "rates",
            ExperimentKind::Perfect => "perfect",
            ExperimentKind::BoundValidity => "bound_validity",
            ExperimentKind::Excess => "excess",
            ExperimentKind::Tune => "tune",
        }
    }
}

/// How λ is chosen for each trial.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "snake_case")]
pub enum LambdaPolicy {
    Fixed { value: f64 },
    /// λ* from the excess-risk bound for the comparator class Ω(w) ≤ tau.
    ExcessOptimal { tau: f64 },
}

impl Default for LambdaPolicy {
    fn default() -> Self {
        LambdaPolicy::Fixed { value: 0.1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RatesOptions {
    /// Source perturbation γ of the good-source variant (the bad variant uses β = 0).
    #[serde(default = "default_good_quality")]
    pub good_quality: f64,
    /// Upper end of the small-m segment on which the good-source slope is fitted.
    #[serde(default = "default_small_m_max")]
    pub small_m_max: usize,
    /// Drop the smallest and largest m from the full-grid fits.
    #[serde(default)]
    pub trim: bool,
}

fn default_good_quality() -> f64 {
    0.02
}
fn default_small_m_max() -> usize {
    256
}

impl Default for RatesOptions {
    fn default() -> Self {
        RatesOptions {
            good_quality: default_good_quality(),
            small_m_max: default_small_m_max(),
            trim: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExcessOptions {
    /// Source qualities compared, in increasing order.
    #[serde(default = "default_gammas")]
    pub gammas: Vec<f64>,
    /// Comparator class radius Ω(w) ≤ tau.
    #[serde(default = "default_tau")]
    pub tau: f64,
}

fn default_gammas() -> Vec<f64> {
    vec![0.1, 1.0, 10.0]
}
fn default_tau() -> f64 {
    100.0
}

impl Default for ExcessOptions {
    fn default() -> Self {
        ExcessOptions {
            gammas: default_gammas(),
            tau: default_tau(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub m_grid: Vec<usize>,
    pub trials: usize,
    #[serde(default = "default_eta")]
    pub eta: f64,
    #[serde(default)]
    pub lambda: LambdaPolicy,
    pub task: TaskSpec,
    /// Scale s of the target regularizer s·‖w‖².
    #[serde(default = "one")]
    pub reg_scale: f64,
    /// Budget ρ on ‖β‖².
    #[serde(default = "one")]
    pub rho: f64,
    /// Source weights; e₁ when absent.
    #[serde(default)]
    pub beta: Option<Vec<f64>>,
    /// Source qualities for `bound_validity`; the task's own when empty.
    #[serde(default)]
    pub gammas: Vec<f64>,
    #[serde(default)]
    pub rates: RatesOptions,
    #[serde(default)]
    pub excess: ExcessOptions,
    #[serde(default = "default_tune_iterations")]
    pub tune_iterations: usize,
    /// Fraction of failed trials above which the run is rejected.
    #[serde(default = "default_failure_cap")]
    pub failure_cap: f64,
    /// Output prefix; `<prefix>.json`, `<prefix>.csv` and `<prefix>_long.csv` are written.
    /// Not serialized: it does not influence results.
    #[serde(default, skip_serializing)]
    pub output: Option<PathBuf>,
    /// Worker threads. Not serialized: results do not depend on it.
    #[serde(default = "one_usize", skip_serializing)]
    pub parallelism: usize,
}

fn default_eta() -> f64 {
    3.0
}
fn one() -> f64 {
    1.0
}
fn one_usize() -> usize {
    1
}
fn default_tune_iterations() -> usize {
    50
}
fn default_failure_cap() -> f64 {
    0.01
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.m_grid.is_empty() {
            return Err(HtlError::invalid("m_grid is empty"));
        }
        if self.m_grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(HtlError::invalid("m_grid must be strictly increasing"));
        }
        if self.m_grid[0] == 0 {
            return Err(HtlError::invalid("m_grid entries must be positive"));
        }
        if self.trials == 0 {
            return Err(HtlError::invalid("trials must be at least 1"));
        }
        if self.parallelism == 0 {
            return Err(HtlError::invalid("parallelism must be at least 1"));
        }
        if !(self.eta >= 0.0) {
            return Err(HtlError::invalid(format!("eta must be ≥ 0, got {}", self.eta)));
        }
        if !(self.reg_scale > 0.0) {
            return Err(HtlError::invalid(format!("reg_scale must be positive, got {}", self.reg_scale)));
        }
        if !(self.rho >= 0.0) {
            return Err(HtlError::invalid(format!("rho must be ≥ 0, got {}", self.rho)));
        }
        match self.lambda {
            LambdaPolicy::Fixed { value } if !(value > 0.0) => {
                return Err(HtlError::invalid(format!("fixed lambda must be positive, got {value}")))
            }
            LambdaPolicy::ExcessOptimal { tau } if !(tau >= 0.0) => {
                return Err(HtlError::invalid(format!("tau must be ≥ 0, got {tau}")))
            }
            _ => {}
        }
        if let Some(b) = &self.beta {
            if b.len() != self.task.source_count {
                return Err(HtlError::Dimension {
                    what: "beta",
                    expected: self.task.source_count,
                    got: b.len(),
                });
            }
        }
        self.task.validate()
    }

    /// β from the config, or e₁.
    pub fn beta(&self) -> Vec<f64> {
        self.beta.clone().unwrap_or_else(|| {
            let mut b = vec![0.0; self.task.source_count];
            b[0] = 1.0;
            b
        })
    }
}
