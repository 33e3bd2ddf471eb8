//! Strongly convex penalties Ω in ℓ₂ geometry (the ℓ₂ norm is self-dual).
//!
//! Convention: `scale·‖w‖₂²` is `σ = 2·scale` strongly convex. Every bound
//! formula consumes [`RegularizerSpec::sigma`]; there are no hidden ½ factors.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, HtlError, Result};
use crate::linalg::{dot, norm1, norm2};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum RegularizerSpec<T> {
    /// scale·‖w‖₂²
    SqL2 { scale: T },
    /// scale·‖w − center‖₂²
    BiasedSqL2 { scale: T, center: Vec<T> },
    /// scale·‖w‖₂² + scale1·‖w‖₁
    Elastic { scale: T, scale1: T },
}

impl<T: Scalar> RegularizerSpec<T> {
    pub fn sq_l2(scale: T) -> Self {
        RegularizerSpec::SqL2 { scale }
    }

    pub fn biased_sq_l2(scale: T, center: Vec<T>) -> Self {
        RegularizerSpec::BiasedSqL2 { scale, center }
    }

    pub fn elastic(scale: T, scale1: T) -> Self {
        RegularizerSpec::Elastic { scale, scale1 }
    }

    pub fn name(&self) -> &'static str {
        match self {
            RegularizerSpec::SqL2 { .. } => "sq_l2",
            RegularizerSpec::BiasedSqL2 { .. } => "biased_sq_l2",
            RegularizerSpec::Elastic { .. } => "elastic",
        }
    }

    pub fn scale(&self) -> T {
        match *self {
            RegularizerSpec::SqL2 { scale }
            | RegularizerSpec::BiasedSqL2 { scale, .. }
            | RegularizerSpec::Elastic { scale, .. } => scale,
        }
    }

    /// Strong-convexity modulus w.r.t. ‖·‖₂.
    pub fn sigma(&self) -> T {
        T::lit(2.0) * self.scale()
    }

    pub fn center(&self) -> Option<&[T]> {
        match self {
            RegularizerSpec::BiasedSqL2 { center, .. } => Some(center),
            _ => None,
        }
    }

    /// True when Ω is differentiable everywhere.
    pub fn is_smooth(&self) -> bool {
        !matches!(self, RegularizerSpec::Elastic { scale1, .. } if *scale1 > T::zero())
    }

    pub fn validate(&self) -> Result<()> {
        let scale = self.scale();
        if !(scale >= T::zero()) || !scale.is_finite() {
            return Err(HtlError::invalid(format!(
                "{} scale must be finite and non-negative, got {scale}",
                self.name()
            )));
        }
        if let RegularizerSpec::Elastic { scale1, .. } = self {
            if !(*scale1 >= T::zero()) || !scale1.is_finite() {
                return Err(HtlError::invalid(format!(
                    "elastic scale1 must be finite and non-negative, got {scale1}"
                )));
            }
        }
        Ok(())
    }

    fn check_len(&self, w: &[T]) -> Result<()> {
        if let Some(c) = self.center() {
            check_dim("regularizer center", c.len(), w.len())?;
        }
        Ok(())
    }

    /// The minimizer of Ω for a vector of length `dim`.
    pub fn minimizer(&self, dim: usize) -> Vec<T> {
        match self.center() {
            Some(c) => c.to_vec(),
            None => vec![T::zero(); dim],
        }
    }

    pub fn value(&self, w: &[T]) -> Result<T> {
        self.check_len(w)?;
        Ok(self.value_unchecked(w))
    }

    pub(crate) fn value_unchecked(&self, w: &[T]) -> T {
        match self {
            RegularizerSpec::SqL2 { scale } => *scale * dot(w, w),
            RegularizerSpec::BiasedSqL2 { scale, center } => {
                let d2 = w
                    .iter()
                    .zip(center)
                    .fold(T::zero(), |acc, (&a, &c)| acc + (a - c) * (a - c));
                *scale * d2
            }
            RegularizerSpec::Elastic { scale, scale1 } => *scale * dot(w, w) + *scale1 * norm1(w),
        }
    }

    /// Gradient (minimal-norm subgradient for the ℓ₁ part at zero coordinates).
    pub fn gradient(&self, w: &[T]) -> Result<Vec<T>> {
        self.check_len(w)?;
        let two = T::lit(2.0);
        Ok(match self {
            RegularizerSpec::SqL2 { scale } => w.iter().map(|&a| two * *scale * a).collect(),
            RegularizerSpec::BiasedSqL2 { scale, center } => w
                .iter()
                .zip(center)
                .map(|(&a, &c)| two * *scale * (a - c))
                .collect(),
            RegularizerSpec::Elastic { scale, scale1 } => w
                .iter()
                .map(|&a| {
                    let sub = if a > T::zero() {
                        *scale1
                    } else if a < T::zero() {
                        -*scale1
                    } else {
                        T::zero()
                    };
                    two * *scale * a + sub
                })
                .collect(),
        })
    }

    /// argmin_w ½‖w − v‖² + step·Ω(w)
    pub fn prox(&self, v: &[T], step: T) -> Result<Vec<T>> {
        if !(step > T::zero()) {
            return Err(HtlError::invalid(format!("prox step must be positive, got {step}")));
        }
        self.check_len(v)?;
        Ok(self.prox_unchecked(v, step))
    }

    pub(crate) fn prox_unchecked(&self, v: &[T], step: T) -> Vec<T> {
        let two = T::lit(2.0);
        match self {
            RegularizerSpec::SqL2 { scale } => {
                let shrink = T::one() + two * *scale * step;
                v.iter().map(|&a| a / shrink).collect()
            }
            RegularizerSpec::BiasedSqL2 { scale, center } => {
                let k = two * *scale * step;
                let shrink = T::one() + k;
                v.iter()
                    .zip(center)
                    .map(|(&a, &c)| (a + k * c) / shrink)
                    .collect()
            }
            RegularizerSpec::Elastic { scale, scale1 } => {
                let thr = step * *scale1;
                let shrink = T::one() + two * *scale * step;
                v.iter()
                    .map(|&a| {
                        let st = a.abs() - thr;
                        if st <= T::zero() {
                            T::zero()
                        } else {
                            a.signum() * st / shrink
                        }
                    })
                    .collect()
            }
        }
    }

    /// Euclidean projection onto {w : Ω(w) ≤ radius}.
    pub fn ball_project(&self, w: &[T], radius: T) -> Result<Vec<T>> {
        if !(radius >= T::zero()) {
            return Err(HtlError::invalid(format!(
                "ball radius must be non-negative, got {radius}"
            )));
        }
        self.check_len(w)?;
        let omega = self.value_unchecked(w);
        if omega <= radius {
            return Ok(w.to_vec());
        }
        if radius == T::zero() {
            return Ok(self.minimizer(w.len()));
        }
        match self {
            RegularizerSpec::SqL2 { .. } | RegularizerSpec::BiasedSqL2 { .. } => {
                let c = self.minimizer(w.len());
                let mut f = (radius / omega).sqrt();
                let mut out: Vec<T> = w.iter().zip(&c).map(|(&a, &ci)| ci + f * (a - ci)).collect();
                // rounding can leave Ω(out) a few ulps above the radius
                while self.value_unchecked(&out) > radius {
                    f = f * (T::one() - T::epsilon() * T::lit(4.0));
                    out = w.iter().zip(&c).map(|(&a, &ci)| ci + f * (a - ci)).collect();
                }
                Ok(out)
            }
            RegularizerSpec::Elastic { .. } => Ok(self.project_by_bisection(w, radius)),
        }
    }

    /// The projection is prox_{μΩ}(w) for the multiplier μ with Ω = radius.
    fn project_by_bisection(&self, w: &[T], radius: T) -> Vec<T> {
        let mut lo = T::zero();
        let mut hi = T::one();
        while self.value_unchecked(&self.prox_unchecked(w, hi)) > radius {
            hi = hi * T::lit(2.0);
            if hi > T::lit(1e30) {
                return self.minimizer(w.len());
            }
        }
        for _ in 0..200 {
            let mid = (lo + hi) / T::lit(2.0);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.value_unchecked(&self.prox_unchecked(w, mid)) > radius {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        self.prox_unchecked(w, hi)
    }

    /// ‖w‖ in the regularizer's norm (ℓ₂).
    pub fn norm(&self, w: &[T]) -> T {
        norm2(w)
    }

    /// Dual norm (ℓ₂ is self-dual).
    pub fn dual_norm(&self, v: &[T]) -> T {
        norm2(v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn value_examples() {
        let r = RegularizerSpec::sq_l2(1.0);
        assert_eq!(r.value(&[0.0, 0.0]).unwrap(), 0.0);
        assert_eq!(r.value(&[3.0, 4.0]).unwrap(), 25.0);
        let b = RegularizerSpec::biased_sq_l2(1.0, vec![1.0, 0.0]);
        assert_eq!(b.value(&[1.0, 0.0]).unwrap(), 0.0);
        assert!(matches!(b.value(&[1.0]), Err(HtlError::Dimension { .. })));
        assert_eq!(r.sigma(), 2.0);
    }

    #[test]
    fn prox_sq_l2_matches_grid_search() {
        let r = RegularizerSpec::sq_l2(1.0);
        let p = r.prox(&[2.0, 0.0], 0.5).unwrap();
        assert_eq!(p, vec![1.0, 0.0]);
        // grid-search oracle on the first coordinate: ½(w − 2)² + 0.5·w²
        let best = (0..=40000)
            .map(|i| -2.0 + 6.0 * i as f64 / 40000.0)
            .min_by(|a, b| {
                let fa = 0.5 * (a - 2.0) * (a - 2.0) + 0.5 * a * a;
                let fb = 0.5 * (b - 2.0) * (b - 2.0) + 0.5 * b * b;
                fa.partial_cmp(&fb).unwrap()
            })
            .unwrap();
        assert!((best - p[0]).abs() < 1e-3);
    }

    #[test]
    fn prox_elastic_soft_threshold() {
        let r = RegularizerSpec::elastic(0.0, 1.0);
        assert_eq!(r.prox(&[2.0, -0.5], 1.0).unwrap(), vec![1.0, 0.0]);
    }

    #[test]
    fn prox_fixed_point_at_center() {
        let specs = [
            RegularizerSpec::sq_l2(0.7),
            RegularizerSpec::biased_sq_l2(1.3, vec![0.5, -1.0]),
            RegularizerSpec::elastic(0.4, 0.2),
        ];
        for s in &specs {
            let c = s.minimizer(2);
            for step in [0.01, 1.0, 30.0] {
                assert_eq!(s.prox(&c, step).unwrap(), c);
            }
        }
        assert!(specs[0].prox(&[1.0, 1.0], 0.0).is_err());
    }

    #[test]
    fn ball_project_examples() {
        let r = RegularizerSpec::sq_l2(1.0);
        assert_eq!(r.ball_project(&[2.0, 0.0], 1.0).unwrap(), vec![1.0, 0.0]);
        assert_eq!(r.ball_project(&[0.3, 0.1], 1.0).unwrap(), vec![0.3, 0.1]);
        assert_eq!(r.ball_project(&[0.0, 0.0], 0.0).unwrap(), vec![0.0, 0.0]);
        assert_eq!(r.ball_project(&[5.0, 1.0], 0.0).unwrap(), vec![0.0, 0.0]);
        let e = RegularizerSpec::elastic(1.0, 0.5);
        let p = e.ball_project(&[2.0, -1.0, 0.1], 1.0).unwrap();
        assert!(e.value(&p).unwrap() <= 1.0 + 1e-12);
        assert!(e.value(&p).unwrap() >= 1.0 - 1e-9);
    }
}
