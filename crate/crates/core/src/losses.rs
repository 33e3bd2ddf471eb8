//! Smooth non-negative losses ℓ(t, y) of a real prediction `t` against a label `y`.
//!
//! Every loss here is convex and H-smooth in `t`: its derivative is H-Lipschitz.
//! The smoothness constant depends on the label range for the margin losses,
//! because their curvature in `t` scales with `y²`. For labels in `[-1, 1]`
//! the constants are 2 (square), 2 (squared hinge) and 1/4 (logistic).

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{HtlError, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossSpec {
    /// (t − y)²
    Square,
    /// max{0, 1 − t·y}²
    SquaredHinge,
    /// ln(1 + exp(−t·y))
    Logistic,
}

impl LossSpec {
    pub const ALL: [LossSpec; 3] = [LossSpec::Square, LossSpec::SquaredHinge, LossSpec::Logistic];

    pub fn name(self) -> &'static str {
        match self {
            LossSpec::Square => "square",
            LossSpec::SquaredHinge => "squared_hinge",
            LossSpec::Logistic => "logistic",
        }
    }

    /// Smoothness constant H for labels with `|y| ≤ label_bound`.
    pub fn smoothness<T: Scalar>(self, label_bound: T) -> T {
        let c2 = label_bound * label_bound;
        match self {
            LossSpec::Square => T::lit(2.0),
            LossSpec::SquaredHinge => T::lit(2.0) * c2,
            LossSpec::Logistic => c2 / T::lit(4.0),
        }
    }

    /// Uniform bound M on the loss when `|t| ≤ pred_bound` and `|y| ≤ label_bound`.
    pub fn range_bound<T: Scalar>(self, pred_bound: T, label_bound: T) -> T {
        let p = pred_bound.abs();
        let c = label_bound.abs();
        match self {
            LossSpec::Square => (p + c) * (p + c),
            LossSpec::SquaredHinge => (T::one() + p * c) * (T::one() + p * c),
            LossSpec::Logistic => softplus(p * c),
        }
    }

    /// Bound on |∂ℓ/∂t| over the same box as [`range_bound`](Self::range_bound).
    pub fn lipschitz_bound<T: Scalar>(self, pred_bound: T, label_bound: T) -> T {
        let p = pred_bound.abs();
        let c = label_bound.abs();
        match self {
            LossSpec::Square => T::lit(2.0) * (p + c),
            LossSpec::SquaredHinge => T::lit(2.0) * c * (T::one() + p * c),
            LossSpec::Logistic => c,
        }
    }

    pub fn value<T: Scalar>(self, prediction: T, label: T) -> Result<T> {
        check_finite(prediction, label)?;
        Ok(self.value_unchecked(prediction, label))
    }

    pub fn grad<T: Scalar>(self, prediction: T, label: T) -> Result<T> {
        check_finite(prediction, label)?;
        Ok(self.grad_unchecked(prediction, label))
    }

    #[inline]
    pub fn value_unchecked<T: Scalar>(self, t: T, y: T) -> T {
        match self {
            LossSpec::Square => (t - y) * (t - y),
            LossSpec::SquaredHinge => {
                let h = (T::one() - t * y).max(T::zero());
                h * h
            }
            LossSpec::Logistic => softplus(-t * y),
        }
    }

    #[inline]
    pub fn grad_unchecked<T: Scalar>(self, t: T, y: T) -> T {
        match self {
            LossSpec::Square => T::lit(2.0) * (t - y),
            LossSpec::SquaredHinge => {
                let h = (T::one() - t * y).max(T::zero());
                -T::lit(2.0) * y * h
            }
            LossSpec::Logistic => -y * sigmoid(-t * y),
        }
    }

    /// Checks |φ(x) − φ(z)| ≤ √(6H(φ(x) + φ(z)))·|x − z| for φ = ℓ(·, label).
    pub fn smooth_diff_bound_check<T: Scalar>(
        self,
        x: T,
        z: T,
        label: T,
        label_bound: T,
    ) -> SmoothDiffCheck<T> {
        let h = self.smoothness(label_bound);
        let fx = self.value_unchecked(x, label);
        let fz = self.value_unchecked(z, label);
        let lhs = (fx - fz).abs();
        let rhs = (T::lit(6.0) * h * (fx + fz)).sqrt() * (x - z).abs();
        SmoothDiffCheck {
            holds: lhs <= rhs,
            lhs,
            rhs,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoothDiffCheck<T> {
    pub holds: bool,
    pub lhs: T,
    pub rhs: T,
}

impl fmt::Display for LossSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LossSpec {
    type Err = HtlError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "square" => Ok(LossSpec::Square),
            "squared_hinge" => Ok(LossSpec::SquaredHinge),
            "logistic" => Ok(LossSpec::Logistic),
            other => Err(HtlError::invalid(format!(
                "unknown loss `{other}` (expected square|squared_hinge|logistic)"
            ))),
        }
    }
}

fn check_finite<T: Scalar>(t: T, y: T) -> Result<()> {
    if !t.is_finite() || !y.is_finite() {
        return Err(HtlError::domain(format!(
            "loss arguments must be finite (prediction {t}, label {y})"
        )));
    }
    Ok(())
}

/// ln(1 + eˣ) without overflow.
fn softplus<T: Scalar>(x: T) -> T {
    if x > T::zero() {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}
