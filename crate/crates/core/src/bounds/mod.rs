//! Complexity estimates and explicit-constant generalization bounds.

mod bennett;
mod formulas;
mod rademacher;

pub use bennett::{bennett_u, bennett_u_inverse, bisect_inverse, log_bound_cap};
pub use formulas::{
    comparison_bounds, excess_gap_bound, excess_lambda_star, excess_z, gen_gap_bound,
    localized_fixed_point, r_bar_cap, rad_bound_smooth, tau_vector, u_src, BoundInputs,
    ComparisonBounds, GapBound, TauVector,
};
pub use rademacher::{
    empirical_rademacher, mean_and_se, sign_draw, signs_of, smooth_surrogate_values, EstimateMode,
    RademacherClass, RademacherEstimate, DEFAULT_DRAWS, MAX_EXACT_M,
};

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::scalar::Scalar;

/// sup |⟨w, x⟩ + Σβ_i h_i(x)| over the certified class: ‖x‖ ≤ B, σ/2·‖w‖² ≤ Ω(w) ≤ α·R̂,
/// and |Σβ_i h_i(x)| ≤ ‖β‖₂·C.
pub fn class_prediction_bound<T: Scalar>(b: T, alpha: T, r_hat: T, sigma: T, beta_norm: T, c: T) -> T {
    b * (T::lit(2.0) * alpha * r_hat / sigma).sqrt() + beta_norm * c
}

/// All evaluated bounds plus the inputs they were computed from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport<T> {
    pub inputs: BoundInputs<T>,
    pub rademacher_estimate: Option<RademacherEstimate<T>>,
    pub rad_bound_smooth: T,
    pub gen_gap: GapBound<T>,
    pub excess_tau: T,
    pub excess_lambda_star: T,
    pub excess_gap: T,
    pub comparison: Option<ComparisonBounds<T>>,
    pub u_src: T,
    /// `r` is a plug-in estimate of the class risk bound, not a certified value.
    pub r_is_estimate: bool,
    pub notes: Vec<String>,
}

pub fn bound_report<T: Scalar>(
    inputs: &BoundInputs<T>,
    rademacher_estimate: Option<RademacherEstimate<T>>,
    excess_tau: T,
    lipschitz: T,
) -> Result<BoundReport<T>> {
    inputs.validate()?;
    let rad = rad_bound_smooth(inputs);
    let gen_gap = gen_gap_bound(rad, inputs.r, inputs.big_m, inputs.m, inputs.eta)?;
    let mut notes = vec![
        "worst_case_m holds up to unspecified log factors".to_string(),
        "u_src is reported verbatim; the gap bound uses the explicit complexity chain".to_string(),
    ];
    let comparison = if inputs.m >= 3 {
        Some(comparison_bounds(inputs, lipschitz)?)
    } else {
        notes.push("comparison bounds skipped: m < 3".to_string());
        None
    };
    Ok(BoundReport {
        inputs: *inputs,
        rademacher_estimate,
        rad_bound_smooth: rad,
        gen_gap,
        excess_tau,
        excess_lambda_star: excess_lambda_star(inputs, excess_tau)?,
        excess_gap: excess_gap_bound(inputs, excess_tau)?,
        comparison,
        u_src: u_src(inputs),
        r_is_estimate: true,
        notes,
    })
}
