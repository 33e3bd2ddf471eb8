//! Closed-form bound evaluators with every constant explicit.

use serde::{Deserialize, Serialize};

use crate::error::{HtlError, Result};
use crate::losses::LossSpec;
use crate::scalar::Scalar;

/// Everything the bound formulas consume.
///
/// `r_src_hat` is R̂_S(h^src_β) (or the plug-in R^src where a formula asks for
/// the population quantity), `r` is the uniform class risk bound, `big_m` the
/// uniform loss bound M, `b` the feature-norm bound and `c` the bound on the
/// vector of source outputs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundInputs<T> {
    pub h: T,
    pub sigma: T,
    pub m: usize,
    pub lambda: T,
    pub rho: T,
    pub b: T,
    pub c: T,
    pub eta: T,
    pub r_src_hat: T,
    pub r: T,
    pub big_m: T,
}

impl<T: Scalar> BoundInputs<T> {
    pub fn validate(&self) -> Result<()> {
        let positive = [("H", self.h), ("sigma", self.sigma), ("lambda", self.lambda)];
        for (name, v) in positive {
            if !(v > T::zero()) || !v.is_finite() {
                return Err(HtlError::invalid(format!("{name} must be positive, got {v}")));
            }
        }
        let non_negative = [
            ("rho", self.rho),
            ("B", self.b),
            ("C", self.c),
            ("eta", self.eta),
            ("R_src_hat", self.r_src_hat),
            ("r", self.r),
            ("M", self.big_m),
        ];
        for (name, v) in non_negative {
            if !(v >= T::zero()) || !v.is_finite() {
                return Err(HtlError::invalid(format!(
                    "{name} must be finite and non-negative, got {v}"
                )));
            }
        }
        if self.m == 0 {
            return Err(HtlError::invalid("m must be positive"));
        }
        Ok(())
    }

    /// κ = H/σ
    pub fn kappa(&self) -> T {
        self.h / self.sigma
    }

    /// Class radius α = 1/λ.
    pub fn alpha(&self) -> T {
        T::one() / self.lambda
    }

    fn mf(&self) -> T {
        T::from_usize_lossy(self.m)
    }
}

/// 4√(3H)(B+C)(1+√(2HB²α/σ))·(R̂√α + √(R̂ρ))/√(mσ), α = 1/λ.
pub fn rad_bound_smooth<T: Scalar>(inp: &BoundInputs<T>) -> T {
    let two = T::lit(2.0);
    let alpha = inp.alpha();
    let r = inp.r_src_hat;
    let lead = T::lit(4.0)
        * (T::lit(3.0) * inp.h).sqrt()
        * (inp.b + inp.c)
        * (T::one() + (two * inp.h * inp.b * inp.b * alpha / inp.sigma).sqrt());
    lead * (r * alpha.sqrt() + (r * inp.rho).sqrt()) / (inp.mf() * inp.sigma).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapBound<T> {
    /// 2ℜ + 3Mη / (m·ln(1 + √(2Mη/(vm))))
    pub tight: T,
    /// 2ℜ + 3√(vMη/(2m)) + 3Mη/(2m)
    pub relaxed: T,
}

/// High-probability bound on R(h) − R̂_S(h) from the loss-class complexity `rad`
/// and the uniform risk bound `r`, with v = 4·rad + r. Holds with probability
/// at least 1 − e^{−η}.
pub fn gen_gap_bound<T: Scalar>(rad: T, r: T, big_m: T, m: usize, eta: T) -> Result<GapBound<T>> {
    if !(rad >= T::zero()) || !(r >= T::zero()) || !(big_m >= T::zero()) || !(eta >= T::zero()) {
        return Err(HtlError::invalid(format!(
            "gap bound needs non-negative inputs (rad {rad}, r {r}, M {big_m}, eta {eta})"
        )));
    }
    if m == 0 {
        return Err(HtlError::invalid("m must be positive"));
    }
    let two = T::lit(2.0);
    let three = T::lit(3.0);
    let mf = T::from_usize_lossy(m);
    let v = T::lit(4.0) * rad + r;
    let me = big_m * eta;
    let base = two * rad;
    if v == T::zero() || me == T::zero() {
        // the confidence term vanishes in the limit
        return Ok(GapBound {
            tight: base,
            relaxed: base,
        });
    }
    let tight = base + three * me / (mf * (two * me / (v * mf)).sqrt().ln_1p());
    let relaxed = base + three * (v * me / (two * mf)).sqrt() + three * me / (two * mf);
    Ok(GapBound { tight, relaxed })
}

/// Z = κ√(R/m)(√R + √ρ)
pub fn excess_z<T: Scalar>(inp: &BoundInputs<T>) -> T {
    let r = inp.r_src_hat;
    inp.kappa() * (r / inp.mf()).sqrt() * (r.sqrt() + inp.rho.sqrt())
}

/// λ* = √(Z/τ + √(ZMη/m)/τ)
pub fn excess_lambda_star<T: Scalar>(inp: &BoundInputs<T>, tau: T) -> Result<T> {
    check_tau(tau)?;
    let z = excess_z(inp);
    let root = (z * inp.big_m * inp.eta / inp.mf()).sqrt();
    Ok((z / tau + root / tau).sqrt())
}

/// √τ·√(Z + √(ZMη/m)) + √(RMη/m) + Mη/m + 2√(RMη/m) + 2Mη/(3m)
pub fn excess_gap_bound<T: Scalar>(inp: &BoundInputs<T>, tau: T) -> Result<T> {
    check_tau(tau)?;
    let z = excess_z(inp);
    let mf = inp.mf();
    let me = inp.big_m * inp.eta;
    let two = T::lit(2.0);
    let dev = (inp.r_src_hat * me / mf).sqrt();
    Ok(tau.sqrt() * (z + (z * me / mf).sqrt()).sqrt()
        + dev
        + me / mf
        + two * dev
        + two * me / (T::lit(3.0) * mf))
}

fn check_tau<T: Scalar>(tau: T) -> Result<()> {
    if !(tau > T::zero()) || !tau.is_finite() {
        return Err(HtlError::invalid(format!("tau must be positive, got {tau}")));
    }
    Ok(())
}

/// R^src(m + κ√m/λ) + κ√(R^src·m·ρ/λ)
pub fn u_src<T: Scalar>(inp: &BoundInputs<T>) -> T {
    let mf = inp.mf();
    let r = inp.r_src_hat;
    let k = inp.kappa();
    r * (mf + k * mf.sqrt() / inp.lambda) + k * (r * mf * inp.rho / inp.lambda).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComparisonBounds<T> {
    /// √(2R̂/(mλσ)) + √(2ρ/(mσ))
    pub worst_case: T,
    /// √(2M/(mλσ)) + √(2ρ/(mσ)); valid up to unspecified log factors
    pub worst_case_m: T,
    /// L(L+1)/(mλσ) + L√(2ρ/(mσ))
    pub r_star: T,
    /// Larger root E of E = R̂ + 45r* + √(8r*E) + √(4M(η+6 ln ln m)E/m) + 20M(η+6 ln ln m)/m
    pub localized_risk: T,
    /// localized_risk − R̂
    pub localized_gap: T,
}

pub fn comparison_bounds<T: Scalar>(inp: &BoundInputs<T>, lipschitz: T) -> Result<ComparisonBounds<T>> {
    if inp.m < 3 {
        return Err(HtlError::invalid(format!(
            "comparison bounds need m ≥ 3 (ln ln m must be positive), got {}",
            inp.m
        )));
    }
    if !(lipschitz >= T::zero()) {
        return Err(HtlError::invalid(format!("Lipschitz constant must be non-negative, got {lipschitz}")));
    }
    let two = T::lit(2.0);
    let mf = inp.mf();
    let mls = mf * inp.lambda * inp.sigma;
    let rho_term = (two * inp.rho / (mf * inp.sigma)).sqrt();
    let worst_case = (two * inp.r_src_hat / mls).sqrt() + rho_term;
    let worst_case_m = (two * inp.big_m / mls).sqrt() + rho_term;
    let r_star = lipschitz * (lipschitz + T::one()) / mls + lipschitz * rho_term;
    let localized_risk = localized_fixed_point(inp.r_src_hat, r_star, inp.big_m, inp.m, inp.eta);
    Ok(ComparisonBounds {
        worst_case,
        worst_case_m,
        r_star,
        localized_risk,
        localized_gap: localized_risk - inp.r_src_hat,
    })
}

/// Larger root of the quadratic in s = √E.
pub fn localized_fixed_point<T: Scalar>(r_hat: T, r_star: T, big_m: T, m: usize, eta: T) -> T {
    let mf = T::from_usize_lossy(m);
    let a = eta + T::lit(6.0) * mf.ln().ln();
    let b = (T::lit(8.0) * r_star).sqrt() + (T::lit(4.0) * big_m * a / mf).sqrt();
    let c = r_hat + T::lit(45.0) * r_star + T::lit(20.0) * big_m * a / mf;
    if b == T::zero() {
        return c;
    }
    let s = (b + (b * b + T::lit(4.0) * c).sqrt()) / T::lit(2.0);
    s * s
}

/// Per-example loss upper bounds over the certified class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TauVector<T> {
    pub tau: Vec<T>,
    pub r_bar: T,
}

/// τ_i = ℓ_i + √((8HB²α/σ)·R̂·ℓ_i) + (HB²α/σ)·R̂ with ℓ_i = ℓ(f_β(x_i), y_i).
pub fn tau_vector<T: Scalar>(
    loss: LossSpec,
    source_outputs: &[T],
    labels: &[T],
    label_bound: T,
    r_hat_src: T,
    alpha: T,
    b: T,
    sigma: T,
) -> Result<TauVector<T>> {
    crate::error::check_dim("source outputs", labels.len(), source_outputs.len())?;
    if !(alpha >= T::zero()) || !(r_hat_src >= T::zero()) {
        return Err(HtlError::invalid(format!(
            "tau vector needs alpha ≥ 0 and R_src_hat ≥ 0 (got {alpha}, {r_hat_src})"
        )));
    }
    if !(sigma > T::zero()) {
        return Err(HtlError::invalid(format!("sigma must be positive, got {sigma}")));
    }
    let h = loss.smoothness(label_bound);
    let k = h * b * b * alpha / sigma;
    let mut tau = Vec::with_capacity(labels.len());
    for (&f, &y) in source_outputs.iter().zip(labels) {
        let l = loss.value(f, y)?;
        tau.push(l + (T::lit(8.0) * k * r_hat_src * l).sqrt() + k * r_hat_src);
    }
    let r_bar = if tau.is_empty() {
        T::zero()
    } else {
        tau.iter().fold(T::zero(), |a, &t| a + t.abs()) / T::from_usize_lossy(tau.len())
    };
    Ok(TauVector { tau, r_bar })
}

/// (1 + √(2HB²α/σ))²·R̂: the Jensen cap on r̄.
pub fn r_bar_cap<T: Scalar>(h: T, b: T, alpha: T, sigma: T, r_hat_src: T) -> T {
    let f = T::one() + (T::lit(2.0) * h * b * b * alpha / sigma).sqrt();
    f * f * r_hat_src
}

#[cfg(test)]
mod tests {
    use super::*;

    fn inputs() -> BoundInputs<f64> {
        BoundInputs {
            h: 2.0,
            sigma: 2.0,
            m: 100,
            lambda: 0.5,
            rho: 1.0,
            b: 1.0,
            c: 1.0,
            eta: 3.0,
            r_src_hat: 0.25,
            r: 0.25,
            big_m: 1.0,
        }
    }

    #[test]
    fn rad_bound_example_and_scaling() {
        let inp = inputs();
        let v = rad_bound_smooth(&inp);
        // 4√6·2·(1+√4)·(0.25√2 + 0.5)/√200
        let oracle = 4.0 * 6f64.sqrt() * 2.0 * 3.0 * (0.25 * 2f64.sqrt() + 0.5) / 200f64.sqrt();
        assert!((v - oracle).abs() < 1e-12);
        assert!((v - 3.548).abs() < 1e-3);
        let doubled = rad_bound_smooth(&BoundInputs { m: 200, ..inp });
        assert!((doubled * 2f64.sqrt() - v).abs() < 1e-12);
        assert_eq!(rad_bound_smooth(&BoundInputs { r_src_hat: 0.0, ..inp }), 0.0);
    }

    #[test]
    fn gap_examples() {
        let g = gen_gap_bound(0.0f64, 0.0, 1.0, 100, 3.0).unwrap();
        assert_eq!((g.tight, g.relaxed), (0.0, 0.0));
        let g = gen_gap_bound(0.01f64, 0.05, 1.0, 1000, 3.0).unwrap();
        assert!((g.relaxed - 0.059357).abs() < 1e-6, "{}", g.relaxed);
        let g = gen_gap_bound(0.02f64, 0.3, 1.0, 50, 0.0).unwrap();
        assert_eq!((g.tight, g.relaxed), (0.04, 0.04));
    }

    #[test]
    fn excess_examples() {
        let inp = BoundInputs {
            h: 1.0,
            sigma: 1.0,
            m: 100,
            lambda: 1.0,
            rho: 1.0,
            eta: 1.0,
            r_src_hat: 0.04,
            big_m: 1.0,
            ..inputs()
        };
        assert!((excess_z(&inp) - 0.024).abs() < 1e-15);
        let l = excess_lambda_star(&inp, 1.0).unwrap();
        let oracle = (0.024f64 + (0.024f64 / 100.0).sqrt()).sqrt();
        assert!((l - oracle).abs() < 1e-15);
        assert!((l - 0.19873).abs() < 1e-5);
        let zero = BoundInputs { r_src_hat: 0.0, ..inp };
        assert_eq!(excess_lambda_star(&zero, 1.0).unwrap(), 0.0);
        let gap = excess_gap_bound(&zero, 1.0).unwrap();
        assert!((gap - 0.01 * (1.0 + 2.0 / 3.0)).abs() < 1e-15);
        let z4 = excess_z(&BoundInputs { m: 400, ..inp });
        assert!((z4 - 0.012).abs() < 1e-15);
    }

    #[test]
    fn comparison_examples() {
        let inp = BoundInputs {
            m: 100,
            lambda: 1.0,
            sigma: 2.0,
            rho: 0.0,
            ..inputs()
        };
        let c = comparison_bounds(&inp, 1.0).unwrap();
        assert!((c.r_star - 0.01).abs() < 1e-15);
        assert_eq!(localized_fixed_point(0.3f64, 0.0, 0.0, 100, 3.0), 0.3);
        assert!(comparison_bounds(&BoundInputs { m: 2, ..inp }, 1.0).is_err());
        // 20·(3 + 6 ln ln 1000)/1000
        let a = 3.0 + 6.0 * 1000f64.ln().ln();
        assert!((20.0 * a / 1000.0 - 0.291917).abs() < 1e-6);
    }

    #[test]
    fn tau_examples() {
        let l = 0.5f64; // square loss of 0.5 against 0 is 0.25
        let t = tau_vector(LossSpec::Square, &[l; 4], &[0.0; 4], 1.0, 0.25, 2.0, 1.0, 2.0).unwrap();
        for &v in &t.tau {
            assert!((v - 1.75).abs() < 1e-15);
        }
        assert!(t.r_bar <= r_bar_cap(2.0, 1.0, 2.0, 2.0, 0.25) + 1e-15);
        let perfect = tau_vector(LossSpec::Square, &[0.3, -0.2], &[0.3, -0.2], 1.0, 0.0, 2.0, 1.0, 2.0).unwrap();
        assert_eq!(perfect.tau, vec![0.0, 0.0]);
        let collapsed = tau_vector(LossSpec::Square, &[0.5, 0.0], &[0.0, 1.0], 1.0, 0.625, 0.0, 1.0, 2.0).unwrap();
        assert_eq!(collapsed.tau, vec![0.25, 1.0]);
    }
}
