use htl::linalg::{dot, norm2};
use htl::RegularizerSpec;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn regs(d: usize) -> Vec<RegularizerSpec> {
    vec![
        RegularizerSpec::sq_l2(1.0),
        RegularizerSpec::sq_l2(0.3),
        RegularizerSpec::biased_sq_l2(0.7, (0..d).map(|j| 0.1 * j as f64 - 0.2).collect()),
        RegularizerSpec::elastic(0.5, 0.2),
    ]
}

fn vec_in(rng: &mut ChaCha8Rng, d: usize, r: f64) -> Vec<f64> {
    (0..d).map(|_| rng.random_range(-r..r)).collect()
}

#[test]
fn strong_convexity_on_random_triples() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let d = 6;
    for reg in regs(d) {
        let sigma = reg.sigma();
        for _ in 0..1000 {
            let u = vec_in(&mut rng, d, 5.0);
            let v = vec_in(&mut rng, d, 5.0);
            let t: f64 = rng.random();
            let mix: Vec<f64> = u.iter().zip(&v).map(|(a, b)| t * a + (1.0 - t) * b).collect();
            let diff: Vec<f64> = u.iter().zip(&v).map(|(a, b)| a - b).collect();
            let lhs = reg.value(&mix).unwrap();
            let rhs = t * reg.value(&u).unwrap() + (1.0 - t) * reg.value(&v).unwrap()
                - sigma / 2.0 * t * (1.0 - t) * dot(&diff, &diff);
            assert!(lhs <= rhs + 1e-9 * (1.0 + rhs.abs()), "{} t={t}", reg.name());
        }
    }
}

#[test]
fn prox_satisfies_optimality() {
    // p = prox(v) minimizes ½‖w − v‖² + step·Ω(w): compare against perturbations
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let d = 5;
    for reg in regs(d) {
        for _ in 0..200 {
            let v = vec_in(&mut rng, d, 3.0);
            let step = rng.random_range(0.01..2.0);
            let p = reg.prox(&v, step).unwrap();
            let obj = |w: &[f64]| {
                let r: Vec<f64> = w.iter().zip(&v).map(|(a, b)| a - b).collect();
                0.5 * dot(&r, &r) + step * reg.value(w).unwrap()
            };
            let best = obj(&p);
            for _ in 0..20 {
                let q: Vec<f64> = p.iter().map(|a| a + rng.random_range(-1e-3..1e-3)).collect();
                assert!(best <= obj(&q) + 1e-12, "{}", reg.name());
            }
        }
    }
}

#[test]
fn projection_is_idempotent_and_feasible() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let d = 4;
    for reg in regs(d) {
        for _ in 0..200 {
            let w = vec_in(&mut rng, d, 10.0);
            let radius = rng.random_range(0.0..5.0);
            let p = reg.ball_project(&w, radius).unwrap();
            assert!(reg.value(&p).unwrap() <= radius + 1e-12);
            assert_eq!(reg.ball_project(&p, radius).unwrap(), p);
        }
    }
}

proptest! {
    #[test]
    fn sq_l2_value_and_sigma(scale in 0.01f64..10.0, w in prop::collection::vec(-10.0f64..10.0, 1..8)) {
        let reg = RegularizerSpec::sq_l2(scale);
        let n = norm2(&w);
        prop_assert!((reg.value(&w).unwrap() - scale * n * n).abs() <= 1e-12 * (1.0 + scale * n * n));
        prop_assert_eq!(reg.sigma(), 2.0 * scale);
    }

    #[test]
    fn projection_never_increases_distance_to_feasible_points(
        w in prop::collection::vec(-10.0f64..10.0, 3),
        z in prop::collection::vec(-0.5f64..0.5, 3),
    ) {
        let reg = RegularizerSpec::sq_l2(1.0);
        let p = reg.ball_project(&w, 1.0).unwrap();
        let dz = |a: &[f64]| norm2(&a.iter().zip(&z).map(|(x, y)| x - y).collect::<Vec<_>>());
        prop_assert!(dz(&p) <= dz(&w) + 1e-12);
    }
}
