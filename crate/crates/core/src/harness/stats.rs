use serde::{Deserialize, Serialize};

/// Ordinary least-squares line through `(x, y)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    /// Standard error of the slope; `None` with fewer than 3 points.
    pub std_error: Option<f64>,
    pub points: usize,
}

pub fn ols(xs: &[f64], ys: &[f64]) -> Option<SlopeFit> {
    let n = xs.len();
    if n != ys.len() || n < 2 {
        return None;
    }
    let nf = n as f64;
    let mx = xs.iter().sum::<f64>() / nf;
    let my = ys.iter().sum::<f64>() / nf;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let std_error = if n > 2 {
        let sse: f64 = xs
            .iter()
            .zip(ys)
            .map(|(x, y)| {
                let r = y - (intercept + slope * x);
                r * r
            })
            .sum();
        Some((sse / (nf - 2.0) / sxx).sqrt())
    } else {
        None
    };
    Some(SlopeFit {
        slope,
        intercept,
        std_error,
        points: n,
    })
}

/// Slope of log(y) against log(m), skipping non-positive y.
pub fn log_log_slope(ms: &[usize], ys: &[f64]) -> Option<SlopeFit> {
    let (lx, ly): (Vec<f64>, Vec<f64>) = ms
        .iter()
        .zip(ys)
        .filter(|(_, &y)| y > 0.0 && y.is_finite())
        .map(|(&m, &y)| ((m as f64).ln(), y.ln()))
        .unzip();
    ols(&lx, &ly)
}

pub fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.iter().sum::<f64>() / v.len() as f64
}

pub fn median(v: &[f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        (s[n / 2 - 1] + s[n / 2]) / 2.0
    }
}

/// P(X ≥ k) for X ~ Binomial(n, 1/2).
pub fn binomial_half_upper_tail(n: usize, k: usize) -> f64 {
    if k == 0 {
        return 1.0;
    }
    if k > n {
        return 0.0;
    }
    // log-space to stay finite for large n
    let ln_half_n = n as f64 * 0.5f64.ln();
    let mut ln_c = 0.0; // ln C(n, 0)
    let mut total = 0.0;
    for j in 0..=n {
        if j > 0 {
            ln_c += ((n - j + 1) as f64).ln() - (j as f64).ln();
        }
        if j >= k {
            total += (ln_c + ln_half_n).exp();
        }
    }
    total.min(1.0)
}

/// One-sided sign test that the first sample tends to be smaller than the second.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignTest {
    pub wins: usize,
    pub ties: usize,
    pub n: usize,
    pub p_value: f64,
}

pub fn sign_test_less(a: &[f64], b: &[f64]) -> SignTest {
    let mut wins = 0;
    let mut ties = 0;
    for (x, y) in a.iter().zip(b) {
        if x < y {
            wins += 1;
        } else if x == y {
            ties += 1;
        }
    }
    let n = a.len().min(b.len()) - ties;
    SignTest {
        wins,
        ties,
        n,
        p_value: binomial_half_upper_tail(n, wins),
    }
}
