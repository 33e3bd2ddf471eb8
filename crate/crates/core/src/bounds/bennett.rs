use crate::error::{HtlError, Result};
use crate::scalar::Scalar;

const NEWTON_MAX_ITER: usize = 60;

/// u(y) = (1 + y)·ln(1 + y) − y
pub fn bennett_u<T: Scalar>(y: T) -> Result<T> {
    if !(y >= T::zero()) || !y.is_finite() {
        return Err(HtlError::domain(format!("u is defined for finite y ≥ 0, got {y}")));
    }
    Ok(u(y))
}

fn u<T: Scalar>(y: T) -> T {
    (T::one() + y) * y.ln_1p() - y
}

/// Closed-form upper bound on u⁻¹(b): 3b / (2·ln(√b + 1)).
pub fn log_bound_cap<T: Scalar>(b: T) -> Result<T> {
    if !(b > T::zero()) || !b.is_finite() {
        return Err(HtlError::domain(format!("cap needs finite b > 0, got {b}")));
    }
    Ok(cap(b))
}

fn cap<T: Scalar>(b: T) -> T {
    T::lit(3.0) * b / (T::lit(2.0) * b.sqrt().ln_1p())
}

/// Solves u(a) = b for a ≥ 0 by Newton's method started at the cap, falling
/// back to bisection if Newton stalls. Accurate to |u(a) − b| ≤ 1e-12·max(1, b).
pub fn bennett_u_inverse<T: Scalar>(b: T) -> Result<T> {
    if !(b >= T::zero()) || !b.is_finite() {
        return Err(HtlError::domain(format!("u⁻¹ needs finite b ≥ 0, got {b}")));
    }
    if b == T::zero() {
        return Ok(T::zero());
    }
    let tol = T::lit(1e-12) * b.max(T::one());
    // u is convex and increasing, so Newton from a point right of the root
    // decreases monotonically onto it.
    let mut a = cap(b);
    for _ in 0..NEWTON_MAX_ITER {
        let f = u(a) - b;
        if f.abs() <= tol {
            return Ok(a);
        }
        let slope = a.ln_1p();
        if !(slope > T::zero()) {
            break;
        }
        let next = a - f / slope;
        if !(next >= T::zero()) || next == a {
            break;
        }
        a = next;
    }
    Ok(bisect_inverse(b))
}

/// Plain bisection for u(a) = b; also serves as the reference in tests.
pub fn bisect_inverse<T: Scalar>(b: T) -> T {
    let mut lo = T::zero();
    let mut hi = cap(b).max(T::one());
    while u(hi) < b {
        hi = hi * T::lit(2.0);
    }
    for _ in 0..400 {
        let mid = (lo + hi) / T::lit(2.0);
        if mid <= lo || mid >= hi {
            break;
        }
        if u(mid) < b {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (lo + hi) / T::lit(2.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn u_examples() {
        assert_eq!(bennett_u(0.0f64).unwrap(), 0.0);
        let e1 = std::f64::consts::E - 1.0;
        assert!((bennett_u(e1).unwrap() - 1.0).abs() < 1e-14);
        assert!(bennett_u(-0.1f64).is_err());
    }

    #[test]
    fn inverse_examples() {
        let b = 2.0 * 2f64.ln() - 1.0;
        let a = bennett_u_inverse(b).unwrap();
        assert!((a - 1.0).abs() < 1e-10);
        assert!((a - bisect_inverse(b)).abs() < 1e-10);
        let a1 = bennett_u_inverse(1.0f64).unwrap();
        assert!((a1 - (std::f64::consts::E - 1.0)).abs() < 1e-10);
    }

    #[test]
    fn cap_examples() {
        let c = log_bound_cap(0.386294f64).unwrap();
        assert!((c - 1.1988).abs() < 1e-4, "{c}");
        assert!((log_bound_cap(1.0f64).unwrap() - 1.5 / 2f64.ln()).abs() < 1e-14);
        assert!(log_bound_cap(0.0f64).is_err());
    }
}
