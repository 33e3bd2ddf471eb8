#![allow(dead_code)]

use htl::dataset::RowPolicy;
use htl::linalg::norm2;
use htl::{Dataset, LossSpec, Matrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A point uniform in direction with norm ≤ 1.
pub fn unit_ball_point(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    let v: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
    let n = norm2(&v).max(1e-12);
    let r: f64 = rng.random();
    v.iter().map(|a| a * r / n).collect()
}

/// Random dataset with `n` source-prediction columns in [-1, 1]; labels are
/// ±1 for the margin losses and in [-1, 1] for square loss.
pub fn random_dataset(rng: &mut ChaCha8Rng, m: usize, d: usize, loss: LossSpec) -> Dataset {
    let mut xs = Vec::with_capacity(m * d);
    let mut ys = Vec::with_capacity(m);
    let w: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
    for _ in 0..m {
        let x = unit_ball_point(rng, d);
        let s: f64 = x.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() + rng.random_range(-0.3..0.3);
        ys.push(match loss {
            LossSpec::Square => s.clamp(-1.0, 1.0),
            _ => {
                if s >= 0.0 {
                    1.0
                } else {
                    -1.0
                }
            }
        });
        xs.extend(x);
    }
    Dataset::new(Matrix::from_row_major(m, d, xs).unwrap(), ys, 1.0, None, RowPolicy::Reject).unwrap()
}

pub fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, r: f64) -> Matrix {
    Matrix::from_row_major(rows, cols, (0..rows * cols).map(|_| rng.random_range(-r..r)).collect()).unwrap()
}
