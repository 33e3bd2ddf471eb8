mod common;

use common::{random_dataset, random_matrix, rng};
use htl::erm_solver::{
    biased_ls_equivalence, constrained_risk_minimizer, fit_with_sources, solve_erm,
    solve_ridge_closed_form, SolverOptions, StopReason, CERTIFICATE_SLACK,
};
use htl::linalg::{dot, norm2};
use htl::{LossSpec, RegularizerSpec};
use rand::Rng;

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[test]
fn iterative_solver_matches_ridge_closed_form() {
    let mut r = rng(10);
    for trial in 0..5 {
        let data = random_dataset(&mut r, 50, 10, LossSpec::Square);
        let offsets: Vec<f64> = (0..50).map(|_| r.random_range(-0.5..0.5)).collect();
        let reg = RegularizerSpec::sq_l2(1.0);
        let lambda = 0.05 + 0.2 * trial as f64;
        let (direct, _) = solve_ridge_closed_form(&data, &reg, lambda, &offsets).unwrap();
        for accelerated in [false, true] {
            let opts = SolverOptions {
                accelerated,
                ..SolverOptions::tight()
            };
            let (iter, rep) = solve_erm(&data, LossSpec::Square, &reg, lambda, &offsets, &opts).unwrap();
            assert_ne!(rep.stop, StopReason::ClosedForm);
            let diff = norm2(&direct.w.iter().zip(&iter.w).map(|(a, b)| a - b).collect::<Vec<_>>());
            assert!(diff <= 1e-8, "trial {trial} accelerated={accelerated}: ‖Δw‖ = {diff:e}");
        }
    }
}

#[test]
fn training_is_deterministic() {
    let mut r = rng(11);
    let data = random_dataset(&mut r, 40, 6, LossSpec::Logistic);
    let preds = random_matrix(&mut r, 40, 2, 1.0);
    let reg = RegularizerSpec::sq_l2(1.0);
    let run = || {
        fit_with_sources(&data, &preds, &[0.6, -0.3], LossSpec::Logistic, &reg, 0.1, &SolverOptions::default())
            .unwrap()
    };
    let (a, ra) = run();
    let (b, rb) = run();
    assert_eq!(a, b);
    assert_eq!(ra, rb);
}

#[test]
fn solution_beats_random_feasible_points() {
    let mut r = rng(12);
    for loss in LossSpec::ALL {
        let data = random_dataset(&mut r, 30, 5, loss);
        let offsets: Vec<f64> = (0..30).map(|_| r.random_range(-0.5..0.5)).collect();
        let reg = RegularizerSpec::sq_l2(1.0);
        let lambda = 0.1;
        let (model, rep) = solve_erm(&data, loss, &reg, lambda, &offsets, &SolverOptions::tight()).unwrap();
        let objective = |w: &[f64]| {
            let risk: f64 = (0..data.len())
                .map(|i| loss.value_unchecked(dot(data.x(i), w) + offsets[i], data.labels()[i]))
                .sum::<f64>()
                / data.len() as f64;
            risk + lambda * dot(w, w)
        };
        assert!((objective(&model.w) - rep.objective).abs() <= 1e-12);
        for k in 0..100 {
            let scale = if k < 50 { 1e-2 } else { 1.0 };
            let w: Vec<f64> = model.w.iter().map(|a| a + scale * r.random_range(-1.0..1.0)).collect();
            assert!(rep.objective <= objective(&w) + 1e-12, "{loss}: random point beats the solver");
        }
    }
}

#[test]
fn certificates_hold_for_every_loss() {
    let mut r = rng(13);
    for loss in LossSpec::ALL {
        for _ in 0..20 {
            let m = r.random_range(5..60);
            let d = r.random_range(1..8);
            let n = r.random_range(1..4);
            let data = random_dataset(&mut r, m, d, loss);
            let preds = random_matrix(&mut r, m, n, 1.0);
            let beta: Vec<f64> = (0..n).map(|_| r.random_range(-1.0..1.0)).collect();
            let lambda = 10f64.powf(r.random_range(-3.0..1.0));
            let reg = RegularizerSpec::sq_l2(1.0);
            let (_, rep) = fit_with_sources(&data, &preds, &beta, loss, &reg, lambda, &SolverOptions::default()).unwrap();
            assert!(rep.empirical_risk <= rep.source_empirical_risk + CERTIFICATE_SLACK);
            assert!(rep.omega_w <= rep.source_empirical_risk / lambda + CERTIFICATE_SLACK);
        }
    }
}

#[test]
fn biased_regularization_is_transfer_with_linear_sources() {
    let mut r = rng(14);
    for _ in 0..20 {
        let m = r.random_range(3..50);
        let d = r.random_range(1..10);
        let n = r.random_range(1..4);
        let data = random_dataset(&mut r, m, d, LossSpec::Square);
        let w_src = random_matrix(&mut r, d, n, 1.0);
        let beta: Vec<f64> = (0..n).map(|_| r.random_range(-1.0..1.0)).collect();
        let (a, b) = biased_ls_equivalence(&data, 0.1, &w_src, &beta).unwrap();
        assert!(max_abs_diff(&a, &b) <= 1e-8);
    }
}

#[test]
fn comparator_respects_radius_and_beats_origin() {
    let mut r = rng(15);
    for loss in LossSpec::ALL {
        let data = random_dataset(&mut r, 200, 4, loss);
        let offsets = vec![0.0; 200];
        let reg = RegularizerSpec::sq_l2(1.0);
        let opts = SolverOptions::default();
        let (_, at_zero) = constrained_risk_minimizer(&data, &offsets, loss, &reg, 0.0, &opts).unwrap();
        let mut prev = at_zero;
        for radius in [0.1, 1.0, 10.0] {
            let (w, risk) = constrained_risk_minimizer(&data, &offsets, loss, &reg, radius, &opts).unwrap();
            assert!(dot(&w, &w) <= radius * (1.0 + 1e-12));
            // nested balls: the minimum cannot increase with the radius
            assert!(risk <= prev + 1e-9, "{loss} radius {radius}: {risk} > {prev}");
            prev = risk;
        }
    }
}

#[test]
fn square_comparator_matches_projected_gradient() {
    // the square-loss comparator is solved as a trust-region problem; cross-check
    // it against the generic path through an equivalent elastic net with zero ℓ₁
    let mut r = rng(16);
    let data = random_dataset(&mut r, 300, 5, LossSpec::Square);
    let offsets: Vec<f64> = (0..300).map(|_| r.random_range(-1.0..1.0)).collect();
    let opts = SolverOptions {
        grad_tol: 1e-12,
        ..SolverOptions::default()
    };
    for radius in [0.01, 0.5, 50.0] {
        let (_, a) = constrained_risk_minimizer(&data, &offsets, LossSpec::Square, &RegularizerSpec::sq_l2(1.0), radius, &opts).unwrap();
        let (_, b) = constrained_risk_minimizer(&data, &offsets, LossSpec::Square, &RegularizerSpec::elastic(1.0, 0.0), radius, &opts).unwrap();
        assert!((a - b).abs() <= 1e-9 * (1.0 + a), "radius {radius}: {a} vs {b}");
    }
}
