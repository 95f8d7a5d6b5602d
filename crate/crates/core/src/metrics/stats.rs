//! Welch's t-test with p-values from the regularized incomplete beta.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;
use thiserror::Error;

const CF_TOLERANCE: f64 = 1e-12;
const CF_MAX_ITER: usize = 300;
const TINY: f64 = 1e-300;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("group {group} has {size} value(s); at least 2 are needed")]
    DegenerateGroup { group: char, size: usize },
    #[error("group {0} contains a non-finite value")]
    NonFinite(char),
    #[error("incomplete beta: invalid arguments x={x}, a={a}, b={b}")]
    Domain { x: f64, a: f64, b: f64 },
    #[error("incomplete beta continued fraction did not converge in {CF_MAX_ITER} iterations")]
    NoConvergence,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TTestResult {
    pub t: f64,
    /// Welch–Satterthwaite degrees of freedom.
    pub df: f64,
    pub p_two_sided: f64,
    pub n_a: usize,
    pub n_b: usize,
    /// Both groups have zero variance; `t`, `df` and `p` follow the
    /// conventions documented on [`welch_t_test`].
    pub degenerate: bool,
}

/// `I_x(a, b)`, evaluated with Lentz's continued fraction.
pub fn regularized_incomplete_beta(x: f64, a: f64, b: f64) -> Result<f64, StatsError> {
    if !(0.0..=1.0).contains(&x) || !(a > 0.0) || !(b > 0.0) || !a.is_finite() || !b.is_finite() {
        return Err(StatsError::Domain { x, a, b });
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    if x == 1.0 {
        return Ok(1.0);
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (-x).ln_1p();
    if x < (a + 1.0) / (a + b + 2.0) {
        Ok(ln_front.exp() * continued_fraction(x, a, b)? / a)
    } else {
        Ok(1.0 - ln_front.exp() * continued_fraction(1.0 - x, b, a)? / b)
    }
}

fn continued_fraction(x: f64, a: f64, b: f64) -> Result<f64, StatsError> {
    let clamp = |v: f64| if v.abs() < TINY { TINY } else { v };
    let (qab, qap, qam) = (a + b, a + 1.0, a - 1.0);
    let mut c = 1.0;
    let mut d = 1.0 / clamp(1.0 - qab * x / qap);
    let mut h = d;
    for m in 1..=CF_MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;
        let even = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 / clamp(1.0 + even * d);
        c = clamp(1.0 + even / c);
        h *= d * c;
        let odd = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 / clamp(1.0 + odd * d);
        c = clamp(1.0 + odd / c);
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < CF_TOLERANCE {
            return Ok(h);
        }
    }
    Err(StatsError::NoConvergence)
}

fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

/// Two-sided Welch (unequal variance) t-test.
///
/// When both groups have zero variance: equal means give `t = 0, p = 1`;
/// different means give `t = ±inf, p = 0`. `df` is then `n_a + n_b - 2`
/// and `degenerate` is set.
pub fn welch_t_test(group_a: &[f64], group_b: &[f64]) -> Result<TTestResult, StatsError> {
    for (name, g) in [('a', group_a), ('b', group_b)] {
        if g.len() < 2 {
            return Err(StatsError::DegenerateGroup { group: name, size: g.len() });
        }
        if g.iter().any(|v| !v.is_finite()) {
            return Err(StatsError::NonFinite(name));
        }
    }
    let (n_a, n_b) = (group_a.len(), group_b.len());
    let (ma, va) = mean_var(group_a);
    let (mb, vb) = mean_var(group_b);
    let (sa, sb) = (va / n_a as f64, vb / n_b as f64);
    let se2 = sa + sb;
    if se2 == 0.0 {
        let (t, p) = if ma == mb {
            (0.0, 1.0)
        } else {
            (f64::INFINITY.copysign(ma - mb), 0.0)
        };
        return Ok(TTestResult {
            t,
            df: (n_a + n_b - 2) as f64,
            p_two_sided: p,
            n_a,
            n_b,
            degenerate: true,
        });
    }
    let t = (ma - mb) / se2.sqrt();
    let df = se2 * se2 / (sa * sa / (n_a - 1) as f64 + sb * sb / (n_b - 1) as f64);
    let p = regularized_incomplete_beta(df / (df + t * t), df / 2.0, 0.5)?.clamp(0.0, 1.0);
    Ok(TTestResult {
        t,
        df,
        p_two_sided: p,
        n_a,
        n_b,
        degenerate: false,
    })
}
