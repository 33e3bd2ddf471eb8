use serde::{Deserialize, Serialize};

use crate::error::{check_dim, HtlError, Result};
use crate::linalg::{norm2, Matrix};
use crate::scalar::Scalar;

/// What to do with a feature row whose ℓ₂ norm exceeds 1.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RowPolicy {
    #[default]
    Reject,
    Normalize,
}

/// Labeled sample with features in the unit ball and labels in `[-C, C]`,
/// optionally carrying precomputed source predictions (one column per source).
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<T> {
    features: Matrix<T>,
    labels: Vec<T>,
    label_bound: T,
    source_preds: Option<Matrix<T>>,
}

impl<T: Scalar> Dataset<T> {
    pub fn new(
        features: Matrix<T>,
        labels: Vec<T>,
        label_bound: T,
        source_preds: Option<Matrix<T>>,
        policy: RowPolicy,
    ) -> Result<Self> {
        let m = features.rows();
        check_dim("label count", m, labels.len())?;
        if let Some(s) = &source_preds {
            check_dim("source prediction rows", m, s.rows())?;
        }
        if !(label_bound > T::zero()) || !label_bound.is_finite() {
            return Err(HtlError::invalid(format!(
                "label bound must be positive and finite, got {label_bound}"
            )));
        }
        let d = features.cols();
        let mut features = features;
        let mut labels = labels;
        let slack = T::lit(1e-12);
        for i in 0..m {
            let row = features.row(i);
            if row.iter().any(|v| !v.is_finite()) {
                return Err(HtlError::InvalidRow {
                    row: i,
                    reason: "non-finite feature".into(),
                });
            }
            let n = norm2(row);
            if n > T::one() + slack {
                match policy {
                    RowPolicy::Reject => {
                        return Err(HtlError::InvalidRow {
                            row: i,
                            reason: format!("feature norm {n} exceeds 1"),
                        })
                    }
                    RowPolicy::Normalize => {
                        for j in 0..d {
                            let v = features[(i, j)] / n;
                            features[(i, j)] = v;
                        }
                    }
                }
            }
            let y = labels[i];
            if !y.is_finite() {
                return Err(HtlError::InvalidRow {
                    row: i,
                    reason: "non-finite label".into(),
                });
            }
            if y.abs() > label_bound {
                log::warn!("row {i}: label {y} clipped to [-{label_bound}, {label_bound}]");
                labels[i] = y.max(-label_bound).min(label_bound);
            }
        }
        Ok(Dataset {
            features,
            labels,
            label_bound,
            source_preds,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    pub fn features(&self) -> &Matrix<T> {
        &self.features
    }

    pub fn x(&self, i: usize) -> &[T] {
        self.features.row(i)
    }

    pub fn labels(&self) -> &[T] {
        &self.labels
    }

    pub fn label_bound(&self) -> T {
        self.label_bound
    }

    pub fn source_preds(&self) -> Option<&Matrix<T>> {
        self.source_preds.as_ref()
    }

    pub fn with_source_preds(mut self, preds: Matrix<T>) -> Result<Self> {
        check_dim("source prediction rows", self.len(), preds.rows())?;
        self.source_preds = Some(preds);
        Ok(self)
    }

    /// Largest feature-row norm (the B of the complexity bounds is at most 1).
    pub fn feature_bound(&self) -> T {
        (0..self.len())
            .map(|i| norm2(self.x(i)))
            .fold(T::zero(), T::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_long_rows_by_default() {
        let x = Matrix::from_row_major(2, 2, vec![0.5, 0.5, 1.0, 1.0]).unwrap();
        let err = Dataset::new(x, vec![0.0, 0.0], 1.0, None, RowPolicy::Reject).unwrap_err();
        assert!(matches!(err, HtlError::InvalidRow { row: 1, .. }));
    }

    #[test]
    fn normalizes_and_clips() {
        let x = Matrix::from_row_major(1, 2, vec![3.0, 4.0]).unwrap();
        let d = Dataset::<f64>::new(x, vec![5.0], 2.0, None, RowPolicy::Normalize).unwrap();
        assert!((d.x(0)[0] - 0.6).abs() < 1e-15);
        assert_eq!(d.labels()[0], 2.0);
        assert!((d.feature_bound() - 1.0).abs() < 1e-15);
    }
}
