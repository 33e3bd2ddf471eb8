//! Regularized ERM with frozen source offsets:
//!
//! ```text
//! ŵ = argmin_w (1/m) Σ ℓ(⟨w, x_i⟩ + o_i, y_i) + λ Ω(w),   o_i = h^src_β(x_i)
//! ```
//!
//! solved by proximal gradient with backtracking (optionally accelerated), plus
//! the closed-form ridge special case and the biased-regularization identity.
//!
//! Every run is started from `w = 0` and only accepts steps that decrease the
//! objective, so on return `F(ŵ) ≤ F(0)`. The two certificates in
//! [`TrainReport`] follow from that inequality and are checked numerically.

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{check_dim, HtlError, Result};
use crate::linalg::{dot, lu_solve, norm1, norm2, Cholesky, Matrix};
use crate::losses::LossSpec;
use crate::regularizers::RegularizerSpec;
use crate::scalar::Scalar;
use crate::source_ensemble::SourceEnsemble;

/// Slack on certificate checks.
pub const CERTIFICATE_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions<T> {
    /// Stop when the gradient-mapping norm falls below this.
    pub grad_tol: T,
    /// Stop when the objective decreased by less than this (relative) over `stall_window` iterations.
    pub stall_tol: T,
    pub stall_window: usize,
    pub max_iter: usize,
    pub accelerated: bool,
}

impl<T: Scalar> Default for SolverOptions<T> {
    fn default() -> Self {
        SolverOptions {
            grad_tol: T::lit(1e-8),
            stall_tol: T::lit(1e-12),
            stall_window: 10,
            max_iter: 100_000,
            accelerated: false,
        }
    }
}

impl<T: Scalar> SolverOptions<T> {
    pub fn accelerated(mut self, on: bool) -> Self {
        self.accelerated = on;
        self
    }

    /// Tight settings used when a solution is compared against a direct solve.
    pub fn tight() -> Self {
        SolverOptions {
            grad_tol: T::lit(1e-13),
            stall_tol: T::zero(),
            stall_window: 50,
            max_iter: 100_000,
            accelerated: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    GradientMapping,
    ObjectiveStall,
    ClosedForm,
}

/// h(x) = ⟨w, x⟩ + Σ β_i h^src_i(x)
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetModel<T> {
    pub w: Vec<T>,
    pub beta: Vec<T>,
    pub loss: LossSpec,
    pub reg: RegularizerSpec<T>,
    pub lambda: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport<T> {
    pub objective: T,
    /// R̂_S(h_{ŵ,β})
    pub empirical_risk: T,
    /// R̂_S(h^src_β), the empirical risk at w = 0
    pub source_empirical_risk: T,
    pub omega_w: T,
    pub iterations: usize,
    pub grad_mapping_norm: T,
    pub stop: StopReason,
    /// R̂_S(h_{ŵ,β}) ≤ R̂_S(h^src_β) + λΩ(0)
    pub certificate_a: bool,
    /// Ω(ŵ) ≤ (R̂_S(h^src_β) + λΩ(0)) / λ
    pub certificate_b: bool,
}

struct Problem<'a, T> {
    data: &'a Dataset<T>,
    loss: LossSpec,
    reg: &'a RegularizerSpec<T>,
    lambda: T,
    offsets: &'a [T],
}

impl<T: Scalar> Problem<'_, T> {
    fn risk(&self, w: &[T]) -> T {
        let m = self.data.len();
        let y = self.data.labels();
        let mut acc = T::zero();
        for i in 0..m {
            let t = dot(self.data.x(i), w) + self.offsets[i];
            acc += self.loss.value_unchecked(t, y[i]);
        }
        acc / T::from_usize_lossy(m)
    }

    fn risk_and_grad(&self, w: &[T], grad: &mut [T]) -> T {
        let m = self.data.len();
        let y = self.data.labels();
        grad.iter_mut().for_each(|g| *g = T::zero());
        let mut acc = T::zero();
        for i in 0..m {
            let xi = self.data.x(i);
            let t = dot(xi, w) + self.offsets[i];
            acc += self.loss.value_unchecked(t, y[i]);
            let dl = self.loss.grad_unchecked(t, y[i]);
            if dl != T::zero() {
                for (g, &x) in grad.iter_mut().zip(xi) {
                    *g += dl * x;
                }
            }
        }
        let inv_m = T::one() / T::from_usize_lossy(m);
        grad.iter_mut().for_each(|g| *g *= inv_m);
        acc * inv_m
    }

    fn objective(&self, w: &[T]) -> T {
        self.risk(w) + self.lambda * self.reg.value_unchecked(w)
    }
}

fn validate_inputs<T: Scalar>(
    data: &Dataset<T>,
    reg: &RegularizerSpec<T>,
    lambda: T,
    offsets: &[T],
) -> Result<()> {
    if data.is_empty() {
        return Err(HtlError::invalid("empty dataset"));
    }
    check_dim("offsets", data.len(), offsets.len())?;
    if !(lambda > T::zero()) || !lambda.is_finite() {
        return Err(HtlError::invalid(format!(
            "lambda must be positive and finite, got {lambda}"
        )));
    }
    reg.validate()?;
    if let Some(c) = reg.center() {
        check_dim("regularizer center", data.dim(), c.len())?;
    }
    if offsets.iter().any(|o| !o.is_finite()) {
        return Err(HtlError::domain("non-finite offset"));
    }
    Ok(())
}

/// Minimizes `(1/m) Σ ℓ(⟨w, x_i⟩ + offsets_i, y_i) + λ Ω(w)` over `w`.
///
/// The returned model has an empty `beta`; callers that know the source
/// weights behind `offsets` fill it in (see [`fit_with_sources`]).
pub fn solve_erm<T: Scalar>(
    data: &Dataset<T>,
    loss: LossSpec,
    reg: &RegularizerSpec<T>,
    lambda: T,
    offsets: &[T],
    opts: &SolverOptions<T>,
) -> Result<(TargetModel<T>, TrainReport<T>)> {
    validate_inputs(data, reg, lambda, offsets)?;
    let prob = Problem {
        data,
        loss,
        reg,
        lambda,
        offsets,
    };
    let d = data.dim();
    let h = loss.smoothness(data.label_bound());
    let b = data.feature_bound();
    let lipschitz = h * b * b + lambda * reg.sigma();
    let mut step = if lipschitz > T::zero() {
        T::one() / lipschitz
    } else {
        T::one()
    };
    let grow = T::lit(1.5);

    let mut w = vec![T::zero(); d];
    let mut grad = vec![T::zero(); d];
    let f0 = prob.objective(&w);
    if !f0.is_finite() {
        return Err(HtlError::NonFinite(format!("objective at w = 0 is {f0}")));
    }
    let mut obj = f0;
    let mut history: Vec<T> = vec![obj];

    // momentum state (accelerated variant only)
    let mut w_prev = w.clone();
    let mut t_k = T::one();

    let mut iterations = 0;
    let mut gnorm = T::infinity();
    let stop;
    loop {
        if iterations >= opts.max_iter {
            return Err(HtlError::NonConvergence {
                iterations,
                grad_norm: gnorm.as_f64(),
                objective: obj.as_f64(),
                best_w: w.iter().map(|v| v.as_f64()).collect(),
            });
        }
        iterations += 1;

        // extrapolated point for the accelerated variant
        let (point, use_momentum) = if opts.accelerated && iterations > 1 {
            let t_next = (T::one() + (T::one() + T::lit(4.0) * t_k * t_k).sqrt()) / T::lit(2.0);
            let beta = (t_k - T::one()) / t_next;
            t_k = t_next;
            let y: Vec<T> = w
                .iter()
                .zip(&w_prev)
                .map(|(&a, &p)| a + beta * (a - p))
                .collect();
            (y, true)
        } else {
            (w.clone(), false)
        };

        let (candidate, fp_grad_norm) = prox_step(&prob, &point, &mut grad, &mut step)?;
        let cand_obj = prob.objective(&candidate);
        if !cand_obj.is_finite() {
            return Err(HtlError::NonFinite(format!(
                "objective became {cand_obj} at iteration {iterations}"
            )));
        }

        let (next, next_obj, g_at_w) = if use_momentum && cand_obj > obj {
            // momentum overshot: restart from the plain step at w
            t_k = T::one();
            let (plain, gn) = prox_step(&prob, &w, &mut grad, &mut step)?;
            let po = prob.objective(&plain);
            (plain, po, gn)
        } else if use_momentum {
            // stationarity is measured at w, not at the extrapolated point
            let gn = if fp_grad_norm <= opts.grad_tol {
                gradient_mapping_norm(&prob, &w, &mut grad, step)
            } else {
                fp_grad_norm
            };
            (candidate, cand_obj, gn)
        } else {
            (candidate, cand_obj, fp_grad_norm)
        };

        gnorm = g_at_w;
        w_prev = std::mem::replace(&mut w, next);
        // guard against round-off raising the objective
        if next_obj > obj {
            w = w_prev.clone();
        } else {
            obj = next_obj;
        }
        history.push(obj);

        if gnorm <= opts.grad_tol {
            stop = StopReason::GradientMapping;
            break;
        }
        let n = history.len();
        if opts.stall_tol > T::zero() && n > opts.stall_window {
            let before = history[n - 1 - opts.stall_window];
            let decrease = before - obj;
            if decrease <= opts.stall_tol * obj.abs() {
                stop = StopReason::ObjectiveStall;
                break;
            }
        }
        step = step * grow;
    }

    let report = build_report(&prob, &w, iterations, gnorm, stop);
    let model = TargetModel {
        w,
        beta: Vec::new(),
        loss,
        reg: reg.clone(),
        lambda,
    };
    Ok((model, report))
}

/// One backtracking proximal-gradient step from `point`; returns the new
/// iterate and the gradient-mapping norm at `point`.
fn prox_step<T: Scalar>(
    prob: &Problem<'_, T>,
    point: &[T],
    grad: &mut [T],
    step: &mut T,
) -> Result<(Vec<T>, T)> {
    let f = prob.risk_and_grad(point, grad);
    if !f.is_finite() {
        return Err(HtlError::NonFinite(format!("risk became {f}")));
    }
    let two = T::lit(2.0);
    loop {
        let v: Vec<T> = point
            .iter()
            .zip(grad.iter())
            .map(|(&p, &g)| p - *step * g)
            .collect();
        let cand = prob.reg.prox_unchecked(&v, *step * prob.lambda);
        let diff: Vec<T> = cand.iter().zip(point).map(|(&c, &p)| c - p).collect();
        let fc = prob.risk(&cand);
        let model = f + dot(grad, &diff) + dot(&diff, &diff) / (two * *step);
        // relative slack absorbs round-off once the step stops moving
        let slack = T::lit(8.0) * T::epsilon() * f.abs().max(T::min_positive_value());
        if fc <= model + slack || *step < T::lit(1e-300) {
            let gnorm = norm2(&diff) / *step;
            return Ok((cand, gnorm));
        }
        *step = *step / two;
    }
}

fn gradient_mapping_norm<T: Scalar>(
    prob: &Problem<'_, T>,
    w: &[T],
    grad: &mut [T],
    step: T,
) -> T {
    prob.risk_and_grad(w, grad);
    let v: Vec<T> = w.iter().zip(grad.iter()).map(|(&p, &g)| p - step * g).collect();
    let cand = prob.reg.prox_unchecked(&v, step * prob.lambda);
    let diff: Vec<T> = cand.iter().zip(w).map(|(&c, &p)| c - p).collect();
    norm2(&diff) / step
}

fn build_report<T: Scalar>(
    prob: &Problem<'_, T>,
    w: &[T],
    iterations: usize,
    grad_mapping_norm: T,
    stop: StopReason,
) -> TrainReport<T> {
    let zeros = vec![T::zero(); w.len()];
    let empirical_risk = prob.risk(w);
    let source_empirical_risk = prob.risk(&zeros);
    let omega_w = prob.reg.value_unchecked(w);
    let omega_0 = prob.reg.value_unchecked(&zeros);
    let slack = T::lit(CERTIFICATE_SLACK);
    let budget = source_empirical_risk + prob.lambda * omega_0;
    TrainReport {
        objective: empirical_risk + prob.lambda * omega_w,
        empirical_risk,
        source_empirical_risk,
        omega_w,
        iterations,
        grad_mapping_norm,
        stop,
        certificate_a: empirical_risk <= budget + slack,
        certificate_b: omega_w <= budget / prob.lambda + slack,
    }
}

/// Factorization of `(1/m)XᵀX + λ·scale·I`, reusable across right-hand sides.
#[derive(Debug, Clone)]
pub struct RidgeSystem<T> {
    chol: Cholesky<T>,
    lambda: T,
    scale: T,
}

impl<T: Scalar> RidgeSystem<T> {
    pub fn new(data: &Dataset<T>, lambda: T, scale: T) -> Result<Self> {
        if data.is_empty() {
            return Err(HtlError::invalid("empty dataset"));
        }
        if !(lambda > T::zero()) || !(scale > T::zero()) {
            return Err(HtlError::invalid(format!(
                "ridge needs lambda > 0 and scale > 0 (got {lambda}, {scale})"
            )));
        }
        let m = T::from_usize_lossy(data.len());
        let mut a = data.features().gram(T::one() / m);
        for j in 0..data.dim() {
            a[(j, j)] += lambda * scale;
        }
        Ok(RidgeSystem {
            chol: Cholesky::factor(&a)?,
            lambda,
            scale,
        })
    }

    pub fn lambda(&self) -> T {
        self.lambda
    }

    pub fn scale(&self) -> T {
        self.scale
    }

    /// Solves for `w` given the offsets of the same dataset the system was built from.
    pub fn solve(&self, data: &Dataset<T>, offsets: &[T]) -> Result<Vec<T>> {
        check_dim("offsets", data.len(), offsets.len())?;
        check_dim("ridge dimension", self.chol.dim(), data.dim())?;
        let m = T::from_usize_lossy(data.len());
        let resid: Vec<T> = data
            .labels()
            .iter()
            .zip(offsets)
            .map(|(&y, &o)| (y - o) / m)
            .collect();
        Ok(self.chol.solve(&data.features().tr_mul_vec(&resid)))
    }
}

/// Square loss with `scale·‖w‖²`: solves `((1/m)XᵀX + λσ/2·I) w = (1/m)Xᵀ(y − offsets)`.
pub fn solve_ridge_closed_form<T: Scalar>(
    data: &Dataset<T>,
    reg: &RegularizerSpec<T>,
    lambda: T,
    offsets: &[T],
) -> Result<(TargetModel<T>, TrainReport<T>)> {
    let scale = match reg {
        RegularizerSpec::SqL2 { scale } => *scale,
        other => {
            return Err(HtlError::invalid(format!(
                "closed form requires the sq_l2 regularizer, got {}",
                other.name()
            )))
        }
    };
    validate_inputs(data, reg, lambda, offsets)?;
    let system = RidgeSystem::new(data, lambda, scale)?;
    let w = system.solve(data, offsets)?;
    let prob = Problem {
        data,
        loss: LossSpec::Square,
        reg,
        lambda,
        offsets,
    };
    let report = build_report(&prob, &w, 1, T::zero(), StopReason::ClosedForm);
    Ok((
        TargetModel {
            w,
            beta: Vec::new(),
            loss: LossSpec::Square,
            reg: reg.clone(),
            lambda,
        },
        report,
    ))
}

/// Report for a ridge solution obtained from a cached [`RidgeSystem`].
pub(crate) fn ridge_report<T: Scalar>(
    data: &Dataset<T>,
    model: &TargetModel<T>,
    offsets: &[T],
) -> Result<TrainReport<T>> {
    check_dim("offsets", data.len(), offsets.len())?;
    let prob = Problem {
        data,
        loss: LossSpec::Square,
        reg: &model.reg,
        lambda: model.lambda,
        offsets,
    };
    Ok(build_report(&prob, &model.w, 1, T::zero(), StopReason::ClosedForm))
}

/// Dispatches to the closed form for square loss with `sq_l2`, otherwise to
/// proximal gradient.
pub fn fit<T: Scalar>(
    data: &Dataset<T>,
    loss: LossSpec,
    reg: &RegularizerSpec<T>,
    lambda: T,
    offsets: &[T],
    opts: &SolverOptions<T>,
) -> Result<(TargetModel<T>, TrainReport<T>)> {
    match (loss, reg) {
        (LossSpec::Square, RegularizerSpec::SqL2 { scale }) if *scale > T::zero() => {
            solve_ridge_closed_form(data, reg, lambda, offsets)
        }
        _ => solve_erm(data, loss, reg, lambda, offsets, opts),
    }
}

/// Trains the target model on top of the source combination `beta`.
pub fn fit_with_sources<T: Scalar>(
    data: &Dataset<T>,
    source_preds: &Matrix<T>,
    beta: &[T],
    loss: LossSpec,
    reg: &RegularizerSpec<T>,
    lambda: T,
    opts: &SolverOptions<T>,
) -> Result<(TargetModel<T>, TrainReport<T>)> {
    check_dim("beta", source_preds.cols(), beta.len())?;
    check_dim("source prediction rows", data.len(), source_preds.rows())?;
    let offsets = source_preds.mul_vec(beta);
    let (mut model, report) = fit(data, loss, reg, lambda, &offsets, opts)?;
    model.beta = beta.to_vec();
    Ok((model, report))
}

/// Solves least squares with biased regularization
/// `min ‖Xw − y‖²/m + λ‖w − W^src β‖²` two ways: directly, and as HTL ERM
/// with offsets `X W^src β` followed by `w = w' + W^src β`.
pub fn biased_ls_equivalence<T: Scalar>(
    data: &Dataset<T>,
    lambda: T,
    w_src: &Matrix<T>,
    beta: &[T],
) -> Result<(Vec<T>, Vec<T>)> {
    let d = data.dim();
    check_dim("source weight rows", d, w_src.rows())?;
    check_dim("beta", w_src.cols(), beta.len())?;
    if !(lambda > T::zero()) {
        return Err(HtlError::invalid(format!("lambda must be positive, got {lambda}")));
    }
    let prior = w_src.mul_vec(beta);
    let m = T::from_usize_lossy(data.len());

    // direct normal equations, pivoted elimination
    let mut a = data.features().gram(T::one() / m);
    for j in 0..d {
        a[(j, j)] += lambda;
    }
    let scaled_y: Vec<T> = data.labels().iter().map(|&y| y / m).collect();
    let mut rhs = data.features().tr_mul_vec(&scaled_y);
    for (r, &p) in rhs.iter_mut().zip(&prior) {
        *r += lambda * p;
    }
    let w_biased = lu_solve(&a, &rhs)?;

    // reparameterized HTL path, Cholesky
    let offsets = data.features().mul_vec(&prior);
    let system = RidgeSystem::new(data, lambda, T::one())?;
    let w_prime = system.solve(data, &offsets)?;
    let w_reparam = w_prime.iter().zip(&prior).map(|(&a, &b)| a + b).collect();
    Ok((w_biased, w_reparam))
}

/// Risk and gradient oracle for `w ↦ (1/n) Σ ℓ(⟨w, x_i⟩ + o_i, y_i)`. Square
/// loss is reduced to its quadratic sufficient statistics once, so each
/// evaluation costs O(d²) instead of O(nd).
enum RiskOracle<'a, T> {
    Quadratic { a: Matrix<T>, b: Vec<T>, c: T },
    General(Problem<'a, T>),
}

impl<T: Scalar> RiskOracle<'_, T> {
    fn risk_and_grad(&self, w: &[T], grad: &mut [T]) -> T {
        match self {
            RiskOracle::Quadratic { a, b, c } => {
                let aw = a.mul_vec(w);
                let two = T::lit(2.0);
                for ((g, &p), &q) in grad.iter_mut().zip(&aw).zip(b) {
                    *g = two * (p - q);
                }
                (dot(w, &aw) - two * dot(b, w) + *c).max(T::zero())
            }
            RiskOracle::General(p) => p.risk_and_grad(w, grad),
        }
    }

    fn risk(&self, w: &[T]) -> T {
        let mut g = vec![T::zero(); w.len()];
        self.risk_and_grad(w, &mut g)
    }
}

/// min R̂(h_{w,β}) subject to Ω(w) ≤ radius, by projected gradient descent with
/// backtracking. Stands in for the best-in-class comparator when run on a
/// large holdout. Returns the minimizer and its risk.
pub fn constrained_risk_minimizer<T: Scalar>(
    data: &Dataset<T>,
    offsets: &[T],
    loss: LossSpec,
    reg: &RegularizerSpec<T>,
    radius: T,
    opts: &SolverOptions<T>,
) -> Result<(Vec<T>, T)> {
    if data.is_empty() {
        return Err(HtlError::invalid("empty dataset"));
    }
    check_dim("offsets", data.len(), offsets.len())?;
    if !(radius >= T::zero()) {
        return Err(HtlError::invalid(format!("radius must be non-negative, got {radius}")));
    }
    reg.validate()?;
    let d = data.dim();
    let oracle = match loss {
        LossSpec::Square => {
            let m = T::from_usize_lossy(data.len());
            let resid: Vec<T> = data
                .labels()
                .iter()
                .zip(offsets)
                .map(|(&y, &o)| y - o)
                .collect();
            let scaled: Vec<T> = resid.iter().map(|&r| r / m).collect();
            RiskOracle::Quadratic {
                a: data.features().gram(T::one() / m),
                b: data.features().tr_mul_vec(&scaled),
                c: resid.iter().fold(T::zero(), |acc, &r| acc + r * r) / m,
            }
        }
        _ => {
            // the regularizer is never evaluated here
            RiskOracle::General(Problem {
                data,
                loss,
                reg,
                lambda: T::zero(),
                offsets,
            })
        }
    };

    let direct_risk = |w: &[T]| -> Result<T> {
        let preds: Vec<T> = data
            .features()
            .mul_vec(w)
            .iter()
            .zip(offsets)
            .map(|(&p, &o)| p + o)
            .collect();
        mean_loss(loss, &preds, data.labels())
    };
    let mut w = reg.ball_project(&vec![T::zero(); d], radius)?;
    if radius == T::zero() {
        let r = direct_risk(&w)?;
        return Ok((w, r));
    }
    if let (RiskOracle::Quadratic { a, b, .. }, RegularizerSpec::SqL2 { scale }) = (&oracle, reg) {
        let w = quadratic_ball_minimizer(a, b, *scale, radius)?;
        let r = direct_risk(&w)?;
        return Ok((w, r));
    }
    let b = data.feature_bound();
    let l = loss.smoothness(data.label_bound()) * b * b;
    let mut step = if l > T::zero() { T::one() / l } else { T::one() };
    let mut grad = vec![T::zero(); d];
    let two = T::lit(2.0);
    let mut stalled = 0;
    for _ in 0..opts.max_iter {
        let f = oracle.risk_and_grad(&w, &mut grad);
        let (next, f_next) = loop {
            let v: Vec<T> = w.iter().zip(&grad).map(|(&a, &g)| a - step * g).collect();
            let cand = reg.ball_project(&v, radius)?;
            let diff: Vec<T> = cand.iter().zip(&w).map(|(&c, &p)| c - p).collect();
            let fc = oracle.risk(&cand);
            let slack = T::lit(8.0) * T::epsilon() * f.abs().max(T::min_positive_value());
            if fc <= f + dot(&grad, &diff) + dot(&diff, &diff) / (two * step) + slack {
                break (cand, fc);
            }
            step = step / two;
            if step < T::lit(1e-30) {
                // no decrease is measurable any more: converged to working precision
                let r = direct_risk(&w)?;
                return Ok((w, r));
            }
        };
        let move_norm = norm2(
            &next.iter().zip(&w).map(|(&a, &p)| a - p).collect::<Vec<T>>(),
        ) / step;
        if f_next < f {
            w = next;
            stalled = 0;
        } else {
            stalled += 1;
        }
        // an inexact projection can keep the gradient mapping above grad_tol
        // even though no decrease is measurable any more
        if move_norm <= opts.grad_tol || stalled >= opts.stall_window.max(1) {
            let r = direct_risk(&w)?;
            return Ok((w, r));
        }
        step = step * T::lit(1.5);
    }
    let r = direct_risk(&w)?;
    Err(HtlError::NonConvergence {
        iterations: opts.max_iter,
        grad_norm: f64::NAN,
        objective: r.as_f64(),
        best_w: w.iter().map(|v| v.as_f64()).collect(),
    })
}

/// argmin wᵀAw − 2bᵀw subject to scale·‖w‖² ≤ radius. The minimizer is
/// w(μ) = (A + μI)⁻¹b with μ = 0 when that is feasible, and otherwise the root
/// of scale·‖w(μ)‖² = radius; ‖w(μ)‖ decreases in μ, so bisection finds it.
fn quadratic_ball_minimizer<T: Scalar>(a: &Matrix<T>, b: &[T], scale: T, radius: T) -> Result<Vec<T>> {
    let d = b.len();
    let solve = |mu: T| -> Option<Vec<T>> {
        let mut shifted = a.clone();
        for j in 0..d {
            shifted[(j, j)] += mu;
        }
        Cholesky::factor(&shifted).ok().map(|c| c.solve(b))
    };
    let feasible = |w: &[T]| scale * dot(w, w) <= radius;
    if let Some(w) = solve(T::zero()) {
        if feasible(&w) {
            return Ok(w);
        }
    }
    let target = (radius / scale).sqrt();
    // ‖(A + μI)⁻¹b‖ ≤ ‖b‖/μ, so this μ is feasible
    let mut hi = norm2(b) / target;
    if hi == T::zero() {
        return Ok(vec![T::zero(); d]);
    }
    let mut lo = T::zero();
    let mut best = solve(hi).ok_or_else(|| HtlError::domain("shifted system is not positive definite"))?;
    for _ in 0..200 {
        let mid = (lo + hi) / T::lit(2.0);
        if !(mid > lo && mid < hi) {
            break;
        }
        match solve(mid) {
            Some(w) if feasible(&w) => {
                hi = mid;
                best = w;
            }
            _ => lo = mid,
        }
    }
    Ok(best)
}

impl<T: Scalar> TargetModel<T> {
    /// ⟨w, x⟩ + Σ β_i h^src_i(x) for a feature vector and the matching source outputs.
    pub fn predict_with(&self, x: &[T], source_outputs: &[T]) -> Result<T> {
        check_dim("features", self.w.len(), x.len())?;
        check_dim("source outputs", self.beta.len(), source_outputs.len())?;
        Ok(dot(&self.w, x) + dot(&self.beta, source_outputs))
    }

    pub fn predict(&self, ensemble: &SourceEnsemble<T>, x: &[T]) -> Result<T> {
        check_dim("features", self.w.len(), x.len())?;
        let src = ensemble.combine_features(&self.beta, x)?;
        Ok(dot(&self.w, x) + src)
    }

    /// Per-row predictions on a dataset given its source-prediction matrix.
    pub fn predictions(&self, data: &Dataset<T>, source_preds: Option<&Matrix<T>>) -> Result<Vec<T>> {
        check_dim("features", self.w.len(), data.dim())?;
        let mut out = data.features().mul_vec(&self.w);
        if !self.beta.is_empty() {
            let s = source_preds
                .ok_or_else(|| HtlError::invalid("model has source weights but no source predictions were given"))?;
            check_dim("source prediction rows", data.len(), s.rows())?;
            let off = s.mul_vec(&self.beta);
            out.iter_mut().zip(off).for_each(|(o, v)| *o += v);
        }
        Ok(out)
    }

    /// Mean loss over `data`: R̂_S(h) on the training sample, a plug-in for R(h) on a holdout.
    pub fn risk_estimate(&self, data: &Dataset<T>, source_preds: Option<&Matrix<T>>) -> Result<T> {
        if data.is_empty() {
            return Err(HtlError::invalid("empty dataset"));
        }
        let preds = self.predictions(data, source_preds)?;
        mean_loss(self.loss, &preds, data.labels())
    }

    /// Certified bound on |h(x)| for ‖x‖ ≤ `feature_bound`:
    /// `√(2Ω(ŵ)/σ)·B + output_bound·Σ|β_i|`.
    pub fn prediction_bound(&self, feature_bound: T, source_output_bound: T) -> T {
        let sigma = self.reg.sigma();
        let w_norm = if self.reg.center().is_none() && sigma > T::zero() {
            (T::lit(2.0) * self.reg.value_unchecked(&self.w) / sigma).sqrt()
        } else {
            norm2(&self.w)
        };
        w_norm * feature_bound + source_output_bound * norm1(&self.beta)
    }
}

pub fn mean_loss<T: Scalar>(loss: LossSpec, preds: &[T], labels: &[T]) -> Result<T> {
    check_dim("predictions", labels.len(), preds.len())?;
    if labels.is_empty() {
        return Err(HtlError::invalid("empty sample"));
    }
    let mut acc = T::zero();
    for (&p, &y) in preds.iter().zip(labels) {
        acc += loss.value(p, y)?;
    }
    Ok(acc / T::from_usize_lossy(labels.len()))
}
