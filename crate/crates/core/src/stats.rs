//! Shared scalar statistics helpers.
//!
//! Thin wrappers over the statrs distribution functions plus the numerically
//! careful building blocks (log-sum-exp, stabilised moments, order-statistic
//! quantiles, Kolmogorov-Smirnov distance) used across the fitting, risk,
//! and diagnostics modules.

use crate::error::{CoreError, Result};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

/// 1/sqrt(2*pi), the standard normal density at zero.
pub const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Standard normal density at `z`.
pub fn std_norm_pdf(z: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * z * z).exp()
}

/// Density of N(mu, sd^2) at `x`.
pub fn norm_pdf(x: f64, mu: f64, sd: f64) -> f64 {
    std_norm_pdf((x - mu) / sd) / sd
}

/// Log-density of N(mu, sd^2) at `x`.
pub fn norm_log_pdf(x: f64, mu: f64, sd: f64) -> f64 {
    let z = (x - mu) / sd;
    -0.5 * z * z - sd.ln() - 0.918_938_533_204_672_7 // ln(sqrt(2*pi))
}

/// Standard normal CDF.
pub fn std_norm_cdf(z: f64) -> f64 {
    // Unit normal; construction cannot fail.
    Normal::new(0.0, 1.0).unwrap().cdf(z)
}

/// Standard normal quantile, polished so that `std_norm_cdf(result)`
/// reproduces `p` to close to machine precision.
///
/// # Panics
/// Panics if `p` is outside `(0, 1)`; callers validate first.
pub fn std_norm_quantile(p: f64) -> f64 {
    assert!(p > 0.0 && p < 1.0, "normal quantile needs p in (0,1)");
    let mut q = Normal::new(0.0, 1.0).unwrap().inverse_cdf(p);
    // One or two Newton corrections pin the inverse to our own CDF.
    for _ in 0..2 {
        let f = std_norm_cdf(q) - p;
        let d = std_norm_pdf(q);
        if d <= f64::MIN_POSITIVE {
            break;
        }
        // Cap the correction: in the far tails cdf differences are pure
        // rounding noise against a tiny density, which would otherwise
        // produce wild steps.
        let step = (f / d).clamp(-1.0, 1.0);
        if !step.is_finite() {
            break;
        }
        q -= step;
    }
    q
}

/// CDF of the standard Student-t distribution with `df` degrees of freedom.
/// `df = +inf` degrades gracefully to the normal CDF.
pub fn student_t_cdf(x: f64, df: f64) -> f64 {
    if df.is_infinite() {
        return std_norm_cdf(x);
    }
    StudentsT::new(0.0, 1.0, df)
        .expect("degrees of freedom validated by caller")
        .cdf(x)
}

/// Numerically stable log(sum(exp(v))) for a non-empty slice.
///
/// Entries equal to `-inf` contribute zero mass; if all entries are `-inf`
/// the result is `-inf`.
pub fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let s: f64 = v.iter().map(|&x| (x - m).exp()).sum();
    m + s.ln()
}

/// Sample mean. Empty input returns an error.
pub fn mean(data: &[f64]) -> Result<f64> {
    if data.is_empty() {
        return Err(CoreError::InsufficientData("mean of empty slice".into()));
    }
    Ok(data.iter().sum::<f64>() / data.len() as f64)
}

/// Unbiased sample variance (denominator n-1). Needs at least two points.
pub fn variance(data: &[f64]) -> Result<f64> {
    if data.len() < 2 {
        return Err(CoreError::InsufficientData(
            "variance needs at least two observations".into(),
        ));
    }
    let m = mean(data)?;
    let ss: f64 = data.iter().map(|&x| (x - m) * (x - m)).sum();
    Ok(ss / (data.len() - 1) as f64)
}

/// Lower order-statistic quantile of an ascending-sorted slice:
/// the smallest x with empirical CDF >= p (inverse-CDF rule).
///
/// # Panics
/// Panics if the slice is empty or `p` is outside `(0, 1)`.
pub fn sorted_quantile(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty sample");
    assert!(p > 0.0 && p < 1.0, "quantile needs p in (0,1)");
    let n = sorted.len() as f64;
    let k = (p * n).ceil() as usize;
    sorted[k.clamp(1, sorted.len()) - 1]
}

/// Kolmogorov-Smirnov distance between an ascending-sorted sample and a
/// reference CDF.
pub fn ks_statistic<F: Fn(f64) -> f64>(sorted: &[f64], cdf: F) -> f64 {
    let n = sorted.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in sorted.iter().enumerate() {
        let f = cdf(x);
        let lo = i as f64 / n;
        let hi = (i + 1) as f64 / n;
        d = d.max((f - lo).abs()).max((f - hi).abs());
    }
    d
}

/// Returns true when all entries are finite.
pub fn all_finite(data: &[f64]) -> bool {
    data.iter().all(|x| x.is_finite())
}
