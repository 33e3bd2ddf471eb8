//! Frozen source hypotheses, their weighted combination h^src_β, and β-tuning
//! by minimizing training risk plus the complexity term of the generalization bound.

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::erm_solver::{fit_with_sources, RidgeSystem, SolverOptions, TargetModel, TrainReport};
use crate::error::{check_dim, HtlError, Result};
use crate::linalg::{dot, norm2, Matrix};
use crate::losses::LossSpec;
use crate::regularizers::RegularizerSpec;
use crate::scalar::Scalar;

/// One black-box source predictor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Source<T> {
    /// x ↦ ⟨w, x⟩
    Linear { w: Vec<T> },
    /// Frozen outputs on the rows of one dataset, keyed by row index.
    Table { dataset_id: String, predictions: Vec<T> },
}

impl<T: Scalar> Source<T> {
    /// sup |h(x)| over the unit ball (linear) or over the table.
    pub fn output_bound(&self) -> T {
        match self {
            Source::Linear { w } => norm2(w),
            Source::Table { predictions, .. } => {
                predictions.iter().fold(T::zero(), |a, p| a.max(p.abs()))
            }
        }
    }
}

/// Where a source is evaluated: a free feature vector, or a dataset row (which
/// table-backed sources need).
#[derive(Debug, Clone, Copy)]
pub enum SourceInput<'a, T> {
    Features(&'a [T]),
    Row { index: usize, features: &'a [T] },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceEnsemble<T> {
    sources: Vec<Source<T>>,
    output_bound: T,
}

impl<T: Scalar> SourceEnsemble<T> {
    /// Output bound is computed from the sources themselves.
    pub fn new(sources: Vec<Source<T>>) -> Result<Self> {
        for s in &sources {
            let ok = match s {
                Source::Linear { w } => w.iter().all(|v| v.is_finite()),
                Source::Table { predictions, .. } => predictions.iter().all(|v| v.is_finite()),
            };
            if !ok {
                return Err(HtlError::domain("source contains non-finite values"));
            }
        }
        let output_bound = sources
            .iter()
            .fold(T::zero(), |a, s| a.max(s.output_bound()));
        Ok(SourceEnsemble {
            sources,
            output_bound,
        })
    }

    /// Overrides the output bound with a looser declared value.
    pub fn with_output_bound(mut self, bound: T) -> Result<Self> {
        if bound < self.output_bound {
            return Err(HtlError::invalid(format!(
                "declared output bound {bound} is below the observed {}",
                self.output_bound
            )));
        }
        self.output_bound = bound;
        Ok(self)
    }

    /// Linear sources from the columns of a d×n weight matrix.
    pub fn from_weight_matrix(w_src: &Matrix<T>) -> Result<Self> {
        let sources = (0..w_src.cols())
            .map(|j| Source::Linear {
                w: (0..w_src.rows()).map(|i| w_src[(i, j)]).collect(),
            })
            .collect();
        Self::new(sources)
    }

    /// Table sources from the source-prediction columns carried by a dataset.
    pub fn from_dataset_columns(data: &Dataset<T>, dataset_id: &str) -> Result<Self> {
        let s = data
            .source_preds()
            .ok_or_else(|| HtlError::invalid("dataset has no source prediction columns"))?;
        let sources = (0..s.cols())
            .map(|j| Source::Table {
                dataset_id: dataset_id.to_string(),
                predictions: (0..s.rows()).map(|i| s[(i, j)]).collect(),
            })
            .collect();
        Self::new(sources)
    }

    pub fn sources(&self) -> &[Source<T>] {
        &self.sources
    }

    pub fn len(&self) -> usize {
        self.sources.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sources.is_empty()
    }

    pub fn output_bound(&self) -> T {
        self.output_bound
    }

    /// Bound on ‖(h_1(x), …, h_n(x))‖₂.
    pub fn vector_bound(&self) -> T {
        self.output_bound * T::from_usize_lossy(self.len()).sqrt()
    }

    pub fn eval(&self, i: usize, input: SourceInput<'_, T>) -> Result<T> {
        let src = self
            .sources
            .get(i)
            .ok_or_else(|| HtlError::invalid(format!("no source {i}")))?;
        match (src, input) {
            (Source::Linear { w }, SourceInput::Features(x))
            | (Source::Linear { w }, SourceInput::Row { features: x, .. }) => {
                check_dim("source weight vector", x.len(), w.len())?;
                Ok(dot(w, x))
            }
            (Source::Table { predictions, .. }, SourceInput::Row { index, .. }) => {
                predictions.get(index).copied().ok_or_else(|| {
                    HtlError::invalid(format!(
                        "row index {index} out of range for a table of {} predictions",
                        predictions.len()
                    ))
                })
            }
            (Source::Table { dataset_id, .. }, SourceInput::Features(_)) => Err(HtlError::invalid(
                format!("table source `{dataset_id}` can only be evaluated on dataset rows"),
            )),
        }
    }

    /// Σ β_i h_i(x) for a free feature vector.
    pub fn combine_features(&self, beta: &[T], x: &[T]) -> Result<T> {
        self.combine(beta, SourceInput::Features(x))
    }

    pub fn combine(&self, beta: &[T], input: SourceInput<'_, T>) -> Result<T> {
        check_dim("beta", self.len(), beta.len())?;
        let mut acc = T::zero();
        for (i, &b) in beta.iter().enumerate() {
            acc += b * self.eval(i, input)?;
        }
        Ok(acc)
    }

    /// m×n matrix of source outputs on the dataset rows.
    pub fn prediction_matrix(&self, data: &Dataset<T>) -> Result<Matrix<T>> {
        let m = data.len();
        let n = self.len();
        let mut out = Matrix::zeros(m, n);
        for (j, src) in self.sources.iter().enumerate() {
            if let Source::Table { predictions, .. } = src {
                check_dim("table source length", m, predictions.len())?;
            }
            for i in 0..m {
                out[(i, j)] = self.eval(
                    j,
                    SourceInput::Row {
                        index: i,
                        features: data.x(i),
                    },
                )?;
            }
        }
        let tol = self.output_bound * (T::one() + T::lit(1e-12)) + T::lit(1e-12);
        if let Some(v) = out.as_slice().iter().find(|v| v.abs() > tol) {
            return Err(HtlError::domain(format!(
                "source output {v} exceeds the ensemble output bound {}",
                self.output_bound
            )));
        }
        Ok(out)
    }
}

/// Source weights β under the budget Ω(β) ≤ ρ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceCombination<T> {
    beta: Vec<T>,
    rho: T,
    reg: RegularizerSpec<T>,
}

impl<T: Scalar> SourceCombination<T> {
    pub fn new(beta: Vec<T>, rho: T, reg: RegularizerSpec<T>) -> Result<Self> {
        if !(rho >= T::zero()) {
            return Err(HtlError::invalid(format!("rho must be non-negative, got {rho}")));
        }
        reg.validate()?;
        let omega = reg.value(&beta)?;
        if omega > rho + T::lit(1e-12) {
            return Err(HtlError::invalid(format!(
                "beta violates its budget: Ω(β) = {omega} > ρ = {rho}"
            )));
        }
        Ok(SourceCombination { beta, rho, reg })
    }

    /// β with the default ‖β‖² regularizer and ρ = ‖β‖².
    pub fn tight(beta: Vec<T>) -> Self {
        let reg = RegularizerSpec::sq_l2(T::one());
        let rho = reg.value_unchecked(&beta);
        SourceCombination { beta, rho, reg }
    }

    pub fn beta(&self) -> &[T] {
        &self.beta
    }

    pub fn rho(&self) -> T {
        self.rho
    }

    pub fn reg(&self) -> &RegularizerSpec<T> {
        &self.reg
    }
}

pub fn combine_predict<T: Scalar>(
    ensemble: &SourceEnsemble<T>,
    comb: &SourceCombination<T>,
    input: SourceInput<'_, T>,
) -> Result<T> {
    ensemble.combine(comb.beta(), input)
}

/// R̂_S(h^src_β) = (1/m) Σ ℓ(h^src_β(x_i), y_i)
pub fn source_risk<T: Scalar>(
    ensemble: &SourceEnsemble<T>,
    comb: &SourceCombination<T>,
    data: &Dataset<T>,
    loss: LossSpec,
) -> Result<T> {
    if data.is_empty() {
        return Err(HtlError::invalid("empty dataset"));
    }
    let preds = ensemble.prediction_matrix(data)?;
    check_dim("beta", preds.cols(), comb.beta().len())?;
    crate::erm_solver::mean_loss(loss, &preds.mul_vec(comb.beta()), data.labels())
}

#[derive(Debug, Clone)]
pub struct TuneOptions<T> {
    pub iterations: usize,
    /// Regularizer defining the β budget Ω(β) ≤ ρ.
    pub beta_reg: RegularizerSpec<T>,
    /// Feature-norm bound B; the unit ball by default.
    pub feature_bound: T,
    /// Overrides for the two complexity-term constants.
    pub c1: Option<T>,
    pub c2: Option<T>,
    pub solver: SolverOptions<T>,
}

impl<T: Scalar> Default for TuneOptions<T> {
    fn default() -> Self {
        TuneOptions {
            iterations: 50,
            beta_reg: RegularizerSpec::sq_l2(T::one()),
            feature_bound: T::one(),
            c1: None,
            c2: None,
            solver: SolverOptions::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct TuneResult<T> {
    pub combination: SourceCombination<T>,
    pub model: TargetModel<T>,
    pub report: TrainReport<T>,
    pub objective: T,
    /// Objective after each accepted outer iteration, starting at β = 0.
    pub history: Vec<T>,
}

const TIE_BREAK_RIDGE: f64 = 1e-10;

/// `2·4√(3H)(B+C)(1+√(2HB²α/σ))/√σ` with α = 1/λ: twice the leading constant
/// of the loss-class complexity bound.
pub fn tuning_constant<T: Scalar>(h: T, b: T, c: T, sigma: T, lambda: T) -> T {
    let alpha = T::one() / lambda;
    let two = T::lit(2.0);
    two * T::lit(4.0) * (T::lit(3.0) * h).sqrt()
        * (b + c)
        * (T::one() + (two * h * b * b * alpha / sigma).sqrt())
        / sigma.sqrt()
}

struct Tuner<'a, T> {
    data: &'a Dataset<T>,
    preds: Matrix<T>,
    loss: LossSpec,
    reg_w: &'a RegularizerSpec<T>,
    lambda: T,
    rho: T,
    c1: T,
    c2: T,
    ridge: Option<RidgeSystem<T>>,
    opts: &'a TuneOptions<T>,
}

struct Evaluated<T> {
    beta: Vec<T>,
    model: TargetModel<T>,
    report: TrainReport<T>,
    objective: T,
}

impl<T: Scalar> Tuner<'_, T> {
    fn evaluate(&self, beta: &[T]) -> Result<Evaluated<T>> {
        let (model, report) = match &self.ridge {
            Some(sys) => {
                let offsets = self.preds.mul_vec(beta);
                let w = sys.solve(self.data, &offsets)?;
                let model = TargetModel {
                    w,
                    beta: beta.to_vec(),
                    loss: self.loss,
                    reg: self.reg_w.clone(),
                    lambda: self.lambda,
                };
                let report = crate::erm_solver::ridge_report(self.data, &model, &offsets)?;
                (model, report)
            }
            None => fit_with_sources(
                self.data,
                &self.preds,
                beta,
                self.loss,
                self.reg_w,
                self.lambda,
                &self.opts.solver,
            )?,
        };
        let objective = self.objective(&report, beta);
        if !objective.is_finite() {
            return Err(HtlError::NonFinite(format!(
                "tuning objective is {objective} at beta = {beta:?}"
            )));
        }
        Ok(Evaluated {
            beta: beta.to_vec(),
            model,
            report,
            objective,
        })
    }

    fn objective(&self, report: &TrainReport<T>, beta: &[T]) -> T {
        let m = T::from_usize_lossy(self.data.len());
        let alpha = T::one() / self.lambda;
        let r_src = report.source_empirical_risk.max(T::zero());
        report.empirical_risk
            + self.c1 * r_src * alpha.sqrt() / m.sqrt()
            + self.c2 * (r_src * self.rho / m).sqrt()
            + T::lit(TIE_BREAK_RIDGE) * dot(beta, beta)
    }

    /// ∂J/∂β with ŵ held fixed, by the chain rule through the cached prediction matrix.
    fn gradient(&self, cur: &Evaluated<T>) -> Vec<T> {
        let m = self.data.len();
        let mf = T::from_usize_lossy(m);
        let n = self.preds.cols();
        let y = self.data.labels();
        let src = self.preds.mul_vec(&cur.beta);
        let lin = self.data.features().mul_vec(&cur.model.w);
        let mut g_fit = vec![T::zero(); n];
        let mut g_src = vec![T::zero(); n];
        for i in 0..m {
            let a = self.loss.grad_unchecked(lin[i] + src[i], y[i]);
            let b = self.loss.grad_unchecked(src[i], y[i]);
            for (j, &s) in self.preds.row(i).iter().enumerate() {
                g_fit[j] += a * s;
                g_src[j] += b * s;
            }
        }
        let alpha = T::one() / self.lambda;
        let r_src = cur.report.source_empirical_risk;
        let coef_lin = self.c1 * alpha.sqrt() / mf.sqrt();
        // d√R̂ = dR̂ / (2√R̂); zero at R̂ = 0 where the penalty is already minimal
        let coef_sqrt = if r_src > T::lit(1e-300) {
            self.c2 * (self.rho / mf).sqrt() / (T::lit(2.0) * r_src.sqrt())
        } else {
            T::zero()
        };
        let ridge = T::lit(2.0 * TIE_BREAK_RIDGE);
        (0..n)
            .map(|j| {
                (g_fit[j] + (coef_lin + coef_sqrt) * g_src[j]) / mf + ridge * cur.beta[j]
            })
            .collect()
    }
}

/// Alternating minimization of
/// `J(β) = R̂_S(h_{ŵ(β),β}) + c₁·R̂_S(h^src_β)·√(1/λ)/√m + c₂·√(R̂_S(h^src_β)·ρ/m) + 10⁻¹⁰‖β‖²`
/// over Ω(β) ≤ ρ: ŵ(β) from the ERM solver, then a projected-gradient step on β
/// accepted only if J decreases. For square loss with `sq_l2` the data
/// covariance is factored once and reused for every ŵ.
pub fn tune_beta<T: Scalar>(
    ensemble: &SourceEnsemble<T>,
    data: &Dataset<T>,
    loss: LossSpec,
    reg_w: &RegularizerSpec<T>,
    lambda: T,
    rho: T,
    opts: &TuneOptions<T>,
) -> Result<TuneResult<T>> {
    if !(rho >= T::zero()) {
        return Err(HtlError::invalid(format!("rho must be non-negative, got {rho}")));
    }
    if opts.iterations == 0 {
        return Err(HtlError::invalid("iterations must be at least 1"));
    }
    if !(lambda > T::zero()) {
        return Err(HtlError::invalid(format!("lambda must be positive, got {lambda}")));
    }
    opts.beta_reg.validate()?;
    let preds = ensemble.prediction_matrix(data)?;
    let n = preds.cols();
    if let Some(c) = opts.beta_reg.center() {
        check_dim("beta regularizer center", n, c.len())?;
    }

    let h = loss.smoothness(data.label_bound());
    let sigma = reg_w.sigma();
    let k = tuning_constant(h, opts.feature_bound, ensemble.vector_bound(), sigma, lambda);
    let ridge = match (loss, reg_w) {
        (LossSpec::Square, RegularizerSpec::SqL2 { scale }) if *scale > T::zero() => {
            Some(RidgeSystem::new(data, lambda, *scale)?)
        }
        _ => None,
    };
    let tuner = Tuner {
        data,
        preds,
        loss,
        reg_w,
        lambda,
        rho,
        c1: opts.c1.unwrap_or(k),
        c2: opts.c2.unwrap_or(k),
        ridge,
        opts,
    };

    let start = opts.beta_reg.ball_project(&vec![T::zero(); n], rho)?;
    let mut cur = tuner.evaluate(&start)?;
    let mut history = vec![cur.objective];
    let mut step = T::one();
    let min_step = T::lit(1e-14);

    for _ in 0..opts.iterations {
        if n == 0 || rho == T::zero() {
            break;
        }
        let g = tuner.gradient(&cur);
        if norm2(&g) == T::zero() {
            break;
        }
        let mut accepted = false;
        while step >= min_step {
            let trial: Vec<T> = cur.beta.iter().zip(&g).map(|(&b, &gj)| b - step * gj).collect();
            let trial = opts.beta_reg.ball_project(&trial, rho)?;
            if trial == cur.beta {
                break;
            }
            let cand = tuner.evaluate(&trial)?;
            if cand.objective < cur.objective {
                cur = cand;
                accepted = true;
                step = step * T::lit(2.0);
                break;
            }
            step = step / T::lit(2.0);
        }
        if !accepted {
            break;
        }
        history.push(cur.objective);
    }

    let combination = SourceCombination {
        beta: cur.beta.clone(),
        rho,
        reg: opts.beta_reg.clone(),
    };
    Ok(TuneResult {
        combination,
        model: cur.model,
        report: cur.report,
        objective: cur.objective,
        history,
    })
}
