//! Empirical Rademacher complexity
//! `ℜ̂_S(F) = E_ε sup_{f∈F} (1/m) Σ ε_i f(x_i)` by exact sign enumeration or
//! Monte Carlo over sign vectors.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, HtlError, Result};
use crate::linalg::{norm2, pairwise_sum, Matrix};
use crate::scalar::Scalar;

/// Largest sample size for which all 2^m sign patterns are enumerated.
pub const MAX_EXACT_M: usize = 16;
pub const DEFAULT_DRAWS: usize = 1000;

#[derive(Debug, Clone, Copy)]
pub enum RademacherClass<'a, T> {
    /// {x ↦ ⟨w, x⟩ : scale·‖w‖² ≤ radius}; the inner sup is √(radius/scale)·‖(1/m)Σ ε_i x_i‖.
    Linear { x: &'a Matrix<T>, scale: T, radius: T },
    /// A finite list of functions: row k holds (f_k(x_1), …, f_k(x_m)).
    Finite { values: &'a Matrix<T> },
}

impl<T: Scalar> RademacherClass<'_, T> {
    pub fn sample_size(&self) -> usize {
        match self {
            RademacherClass::Linear { x, .. } => x.rows(),
            RademacherClass::Finite { values } => values.cols(),
        }
    }

    fn sup(&self, eps: &[i8]) -> T {
        let mf = T::from_usize_lossy(eps.len());
        match self {
            RademacherClass::Linear { x, scale, radius } => {
                let mut acc = vec![T::zero(); x.cols()];
                for (i, &e) in eps.iter().enumerate() {
                    let s = if e > 0 { T::one() } else { -T::one() };
                    for (a, &v) in acc.iter_mut().zip(x.row(i)) {
                        *a += s * v;
                    }
                }
                (*radius / *scale).sqrt() * norm2(&acc) / mf
            }
            RademacherClass::Finite { values } => {
                let mut best = T::neg_infinity();
                for k in 0..values.rows() {
                    let row = values.row(k);
                    let mut acc = T::zero();
                    for (&e, &v) in eps.iter().zip(row) {
                        if e > 0 {
                            acc += v;
                        } else {
                            acc -= v;
                        }
                    }
                    best = best.max(acc);
                }
                if values.rows() == 0 {
                    T::zero()
                } else {
                    best / mf
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimateMode {
    Exact,
    MonteCarlo { draws: usize, seed: u64 },
    /// Exact when m ≤ 16, otherwise Monte Carlo.
    Auto { draws: usize, seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RademacherEstimate<T> {
    pub mean: T,
    /// None for exact enumeration.
    pub std_error: Option<T>,
    pub exact: bool,
    pub draws: usize,
}

pub fn empirical_rademacher<T: Scalar>(
    class: &RademacherClass<'_, T>,
    mode: EstimateMode,
) -> Result<RademacherEstimate<T>> {
    if let RademacherClass::Linear { scale, radius, .. } = class {
        if !(*scale > T::zero()) || !(*radius >= T::zero()) {
            return Err(HtlError::invalid(format!(
                "linear class needs scale > 0 and radius ≥ 0 (got {scale}, {radius})"
            )));
        }
    }
    let m = class.sample_size();
    if m == 0 {
        return Err(HtlError::invalid("empty sample"));
    }
    match mode {
        EstimateMode::Exact => exact(class, m),
        EstimateMode::MonteCarlo { draws, seed } => monte_carlo(class, m, draws, seed),
        EstimateMode::Auto { draws, seed } => {
            if m <= MAX_EXACT_M {
                exact(class, m)
            } else {
                monte_carlo(class, m, draws, seed)
            }
        }
    }
}

fn exact<T: Scalar>(class: &RademacherClass<'_, T>, m: usize) -> Result<RademacherEstimate<T>> {
    if m > MAX_EXACT_M {
        return Err(HtlError::invalid(format!(
            "exact enumeration supports m ≤ {MAX_EXACT_M}, got {m}"
        )));
    }
    let patterns = 1usize << m;
    let values: Vec<T> = (0..patterns)
        .into_par_iter()
        .map(|p| class.sup(&signs_of(p, m)))
        .collect();
    Ok(RademacherEstimate {
        mean: pairwise_sum(&values) / T::from_usize_lossy(patterns),
        std_error: None,
        exact: true,
        draws: patterns,
    })
}

/// Bit i of `pattern` set ⇔ ε_i = +1.
pub fn signs_of(pattern: usize, m: usize) -> Vec<i8> {
    (0..m)
        .map(|i| if pattern >> i & 1 == 1 { 1 } else { -1 })
        .collect()
}

fn monte_carlo<T: Scalar>(
    class: &RademacherClass<'_, T>,
    m: usize,
    draws: usize,
    seed: u64,
) -> Result<RademacherEstimate<T>> {
    if draws < 2 {
        return Err(HtlError::invalid(format!("need at least 2 draws, got {draws}")));
    }
    let values: Vec<T> = (0..draws)
        .into_par_iter()
        .map(|k| class.sup(&sign_draw(seed, k as u64, m)))
        .collect();
    let (mean, se) = mean_and_se(&values);
    Ok(RademacherEstimate {
        mean,
        std_error: Some(se),
        exact: false,
        draws,
    })
}

/// Sign vector for draw `k`; each draw has its own stream so results do not
/// depend on scheduling.
pub fn sign_draw(seed: u64, k: u64, m: usize) -> Vec<i8> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(k);
    (0..m).map(|_| if rng.random::<bool>() { 1 } else { -1 }).collect()
}

/// Sample mean and standard error, both with a fixed summation tree.
pub fn mean_and_se<T: Scalar>(values: &[T]) -> (T, T) {
    let n = T::from_usize_lossy(values.len());
    let mean = pairwise_sum(values) / n;
    if values.len() < 2 {
        return (mean, T::zero());
    }
    let sq: Vec<T> = values.iter().map(|&v| (v - mean) * (v - mean)).collect();
    let var = pairwise_sum(&sq) / (n - T::one());
    (mean, (var / n).sqrt())
}

/// Finite class with values 2√(3H)·√τ_i·f_k(x_i): its Rademacher complexity
/// upper-bounds that of the loss class {(x, y) ↦ ℓ(f_k(x), y)}.
pub fn smooth_surrogate_values<T: Scalar>(values: &Matrix<T>, tau: &[T], h: T) -> Result<Matrix<T>> {
    check_dim("tau", values.cols(), tau.len())?;
    let c = T::lit(2.0) * (T::lit(3.0) * h).sqrt();
    let mut out = values.clone();
    for k in 0..values.rows() {
        for (i, &t) in tau.iter().enumerate() {
            out[(k, i)] = c * t.max(T::zero()).sqrt() * values[(k, i)];
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_identical_points_in_unit_ball() {
        let x = Matrix::<f64>::from_row_major(2, 2, vec![1.0, 0.0, 1.0, 0.0]).unwrap();
        let class = RademacherClass::Linear {
            x: &x,
            scale: 1.0,
            radius: 1.0,
        };
        let e = empirical_rademacher(&class, EstimateMode::Exact).unwrap();
        assert!(e.exact);
        assert!((e.mean - 0.5).abs() < 1e-15);
    }

    #[test]
    fn zero_function_class() {
        let v = Matrix::<f64>::zeros(1, 5);
        let class = RademacherClass::Finite { values: &v };
        assert_eq!(empirical_rademacher(&class, EstimateMode::Exact).unwrap().mean, 0.0);
        let mc = empirical_rademacher(&class, EstimateMode::MonteCarlo { draws: 10, seed: 1 }).unwrap();
        assert_eq!(mc.mean, 0.0);
    }

    #[test]
    fn exact_rejects_large_m() {
        let v = Matrix::<f64>::zeros(1, 17);
        let class = RademacherClass::Finite { values: &v };
        assert!(empirical_rademacher(&class, EstimateMode::Exact).is_err());
        let auto = empirical_rademacher(&class, EstimateMode::Auto { draws: 20, seed: 3 }).unwrap();
        assert!(!auto.exact);
    }
}
