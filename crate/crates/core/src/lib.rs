//! Hypothesis transfer learning through regularized ERM: a target model
//! h(x) = ⟨w, x⟩ + Σ βᵢ hᵢ^src(x) is trained by minimizing
//! R̂_S(h) + λΩ(w), with explicit-constant complexity, generalization and
//! excess-risk bounds, and synthetic experiments that exercise them.
//!
//! Numerical code is generic over [`scalar::Scalar`] (f32/f64); the aliases
//! below fix the working precision to f64.

pub mod bounds;
pub mod dataset;
pub mod erm_solver;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod losses;
pub mod regularizers;
pub mod scalar;
pub mod source_ensemble;
pub mod synth;

pub use error::{HtlError, Result};
pub use losses::LossSpec;

pub type Dataset = dataset::Dataset<f64>;
pub type Matrix = linalg::Matrix<f64>;
pub type RegularizerSpec = regularizers::RegularizerSpec<f64>;
pub type TargetModel = erm_solver::TargetModel<f64>;
pub type TrainReport = erm_solver::TrainReport<f64>;
pub type SourceEnsemble = source_ensemble::SourceEnsemble<f64>;
pub type SourceCombination = source_ensemble::SourceCombination<f64>;
pub type BoundInputs = bounds::BoundInputs<f64>;
