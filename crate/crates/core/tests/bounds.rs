mod common;

use common::{random_dataset, rng, unit_ball_point};
use htl::bounds::{
    bennett_u, bennett_u_inverse, bisect_inverse, empirical_rademacher, gen_gap_bound,
    log_bound_cap, rad_bound_smooth, signs_of, smooth_surrogate_values, tau_vector, BoundInputs,
    EstimateMode, RademacherClass,
};
use htl::linalg::{dot, norm2};
use htl::{LossSpec, Matrix};
use rand::Rng;

fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| (lo.ln() + (hi.ln() - lo.ln()) * i as f64 / (n - 1) as f64).exp())
        .collect()
}

#[test]
fn newton_inverse_matches_bisection() {
    for b in log_grid(1e-6, 1e6, 60) {
        let a = bennett_u_inverse(b).unwrap();
        let oracle = bisect_inverse(b);
        assert!((a - oracle).abs() <= 1e-10 * a.max(1.0), "b={b}: {a} vs {oracle}");
        assert!((bennett_u(a).unwrap() - b).abs() <= 1e-12 * b.max(1.0));
    }
}

#[test]
fn inverse_never_exceeds_log_cap() {
    for b in log_grid(1e-6, 1e6, 60) {
        assert!(bennett_u_inverse(b).unwrap() <= log_bound_cap(b).unwrap(), "b={b}");
    }
}

#[test]
fn finite_class_enumeration_matches_direct_formula() {
    // {f, −f}: sup is |Σ ε_i f_i| / m
    let mut r = rng(1);
    for m in [1usize, 5, 12] {
        let f: Vec<f64> = (0..m).map(|_| r.random_range(-1.0..1.0)).collect();
        let mut vals = f.clone();
        vals.extend(f.iter().map(|v| -v));
        let values = Matrix::from_row_major(2, m, vals).unwrap();
        let est = empirical_rademacher(&RademacherClass::Finite { values: &values }, EstimateMode::Exact).unwrap();
        let direct: f64 = (0..1usize << m)
            .map(|p| {
                let s = signs_of(p, m);
                s.iter().zip(&f).map(|(&e, v)| e as f64 * v).sum::<f64>().abs() / m as f64
            })
            .sum::<f64>()
            / (1u64 << m) as f64;
        assert!(est.exact);
        assert!((est.mean - direct).abs() <= 1e-15, "m={m}");
    }
}

#[test]
fn monte_carlo_agrees_with_exact_enumeration() {
    let mut r = rng(2);
    let m = 14;
    let d = 3;
    let x = Matrix::from_row_major(m, d, (0..m).flat_map(|_| unit_ball_point(&mut r, d)).collect()).unwrap();
    let class = RademacherClass::Linear { x: &x, scale: 1.0, radius: 2.0 };
    let exact = empirical_rademacher(&class, EstimateMode::Exact).unwrap();
    let mc = empirical_rademacher(&class, EstimateMode::MonteCarlo { draws: 4000, seed: 5 }).unwrap();
    let se = mc.std_error.unwrap();
    assert!((mc.mean - exact.mean).abs() <= 4.0 * se, "{} vs {} (se {se})", mc.mean, exact.mean);
    let auto = empirical_rademacher(&class, EstimateMode::Auto { draws: 10, seed: 0 }).unwrap();
    assert_eq!(auto, exact);
}

#[test]
fn large_exact_request_is_rejected() {
    let x = Matrix::from_row_major(17, 1, vec![0.1; 17]).unwrap();
    let class = RademacherClass::Linear { x: &x, scale: 1.0, radius: 1.0 };
    assert!(empirical_rademacher(&class, EstimateMode::Exact).is_err());
}

#[test]
fn symmetrization_holds_on_enumerable_distributions() {
    // E_S sup_f (E f − (1/m) Σ f(z_i)) ≤ 2 E_S ℜ_S(F), all exact
    let mut r = rng(3);
    for _ in 0..10 {
        let support = r.random_range(2..=4usize);
        let m = r.random_range(1..=6usize);
        let k = r.random_range(1..=5usize);
        let mut p: Vec<f64> = (0..support).map(|_| r.random_range(0.1..1.0)).collect();
        let total: f64 = p.iter().sum();
        p.iter_mut().for_each(|v| *v /= total);
        let f: Vec<Vec<f64>> = (0..k).map(|_| (0..support).map(|_| r.random_range(0.0..1.0)).collect()).collect();
        let means: Vec<f64> = f.iter().map(|fk| dot(fk, &p)).collect();
        let mut lhs = 0.0;
        let mut rhs = 0.0;
        for code in 0..support.pow(m as u32) {
            let mut c = code;
            let mut idx = Vec::with_capacity(m);
            let mut prob = 1.0;
            for _ in 0..m {
                idx.push(c % support);
                prob *= p[c % support];
                c /= support;
            }
            let sup = f
                .iter()
                .zip(&means)
                .map(|(fk, mu)| mu - idx.iter().map(|&z| fk[z]).sum::<f64>() / m as f64)
                .fold(f64::NEG_INFINITY, f64::max);
            lhs += prob * sup;
            let values = Matrix::from_row_major(k, m, f.iter().flat_map(|fk| idx.iter().map(|&z| fk[z])).collect()).unwrap();
            let rad = empirical_rademacher(&RademacherClass::Finite { values: &values }, EstimateMode::Exact).unwrap();
            rhs += prob * rad.mean;
        }
        assert!(lhs <= 2.0 * rhs + 1e-12, "{lhs} > 2·{rhs}");
    }
}

#[test]
fn tau_vector_dominates_sampled_class_members() {
    let mut r = rng(4);
    for loss in LossSpec::ALL {
        let data = random_dataset(&mut r, 40, 4, loss);
        let src: Vec<f64> = (0..40).map(|_| r.random_range(-1.0..1.0)).collect();
        let y = data.labels();
        let r_hat = src.iter().zip(y).map(|(&s, &yy)| loss.value_unchecked(s, yy)).sum::<f64>() / 40.0;
        let (alpha, sigma) = (3.0, 2.0);
        let h = loss.smoothness(1.0);
        let tv = tau_vector(loss, &src, y, 1.0, r_hat, alpha, 1.0, sigma).unwrap();
        let jensen = (1.0 + (2.0 * h * alpha / sigma).sqrt()).powi(2) * r_hat;
        assert!(tv.r_bar <= jensen * (1.0 + 1e-12));
        // Ω(w) = ‖w‖² ≤ α·R̂
        let radius = (alpha * r_hat).sqrt();
        for _ in 0..1000 {
            let dir = unit_ball_point(&mut r, 4);
            let n = norm2(&dir).max(1e-12);
            let w: Vec<f64> = dir.iter().map(|v| v / n * radius * r.random::<f64>().sqrt()).collect();
            for i in 0..40 {
                let l = loss.value_unchecked(dot(data.x(i), &w) + src[i], y[i]);
                assert!(l <= tv.tau[i] + 1e-9, "{loss} row {i}: {l} > {}", tv.tau[i]);
            }
        }
    }
}

#[test]
fn smooth_surrogate_dominates_finite_loss_class() {
    let mut r = rng(5);
    for _ in 0..10 {
        let m = r.random_range(2..=10usize);
        let k = r.random_range(1..=8usize);
        let loss = LossSpec::ALL[r.random_range(0..3)];
        let f = Matrix::from_row_major(k, m, (0..k * m).map(|_| r.random_range(-2.0..2.0)).collect()).unwrap();
        let y: Vec<f64> = (0..m).map(|_| if r.random::<bool>() { 1.0 } else { -1.0 }).collect();
        let lv: Vec<f64> = (0..k * m).map(|j| loss.value_unchecked(f.as_slice()[j], y[j % m])).collect();
        let tau: Vec<f64> = (0..m).map(|i| (0..k).map(|j| lv[j * m + i]).fold(0.0, f64::max)).collect();
        let lv = Matrix::from_row_major(k, m, lv).unwrap();
        let lhs = empirical_rademacher(&RademacherClass::Finite { values: &lv }, EstimateMode::Exact).unwrap();
        let sur = smooth_surrogate_values(&f, &tau, loss.smoothness(1.0)).unwrap();
        let rhs = empirical_rademacher(&RademacherClass::Finite { values: &sur }, EstimateMode::Exact).unwrap();
        assert!(lhs.mean <= rhs.mean + 1e-12);
    }
}

#[test]
fn perfect_source_collapse_is_exact() {
    let inp = BoundInputs {
        h: 2.0,
        sigma: 2.0,
        m: 100,
        lambda: 0.5,
        rho: 1.0,
        b: 1.0,
        c: 1.0,
        eta: 3.0,
        r_src_hat: 0.0,
        r: 0.0,
        big_m: 1.0,
    };
    assert_eq!(rad_bound_smooth(&inp), 0.0);
    let g = gen_gap_bound(0.0, 0.0, 1.0, 100, 3.0).unwrap();
    assert_eq!((g.tight, g.relaxed), (0.0, 0.0));
}
