//! Small statistics helpers: deterministic summation, sample moments and a
//! weighted log-log least-squares fit.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

/// Pairwise summation. The split points depend only on the slice length, so
/// the result is reproducible bit for bit.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    const LEAF: usize = 64;
    if xs.len() <= LEAF {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    pairwise_sum(xs) / xs.len() as f64
}

/// Mean and standard error of the mean (sample standard deviation / √n).
pub fn mean_and_std_error(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    let m = mean(xs);
    if n < 2 || !m.is_finite() {
        return (m, f64::NAN);
    }
    let dev: Vec<f64> = xs.iter().map(|x| (x - m) * (x - m)).collect();
    let var = pairwise_sum(&dev) / (n - 1) as f64;
    (m, (var / n as f64).sqrt())
}

/// Two-sided Student-t quantile for a `level` confidence interval.
pub fn t_quantile(level: f64, dof: usize) -> f64 {
    let dist = StudentsT::new(0.0, 1.0, dof.max(1) as f64).expect("valid dof");
    dist.inverse_cdf(0.5 + level / 2.0)
}

/// Weighted least squares of `log y` against `log x`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogLogFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_std_error: f64,
    /// 95% confidence interval for the slope.
    pub slope_ci: (f64, f64),
    pub r_squared: f64,
    pub n_points: usize,
    /// Set when `r_squared` is below [`LogLogFit::R2_FLAG`].
    pub poor_fit: bool,
}

impl LogLogFit {
    pub const R2_FLAG: f64 = 0.98;
}

/// Fits `log y = a + b log x`. Weights multiply the squared residuals; pass
/// `None` for ordinary least squares. Needs at least two points with positive
/// coordinates; returns `None` otherwise.
pub fn fit_loglog(x: &[f64], y: &[f64], weights: Option<&[f64]>) -> Option<LogLogFit> {
    assert_eq!(x.len(), y.len());
    let pts: Vec<(f64, f64, f64)> = x
        .iter()
        .zip(y)
        .enumerate()
        .filter(|(_, (a, b))| **a > 0.0 && **b > 0.0)
        .map(|(i, (a, b))| (a.ln(), b.ln(), weights.map_or(1.0, |w| w[i])))
        .collect();
    let n = pts.len();
    if n < 2 {
        return None;
    }
    // Only relative weights matter; normalising to mean one keeps the
    // residual variance in the units of the data.
    let wbar = pts.iter().map(|p| p.2).sum::<f64>() / n as f64;
    let pts: Vec<(f64, f64, f64)> = pts.into_iter().map(|(a, b, w)| (a, b, w / wbar)).collect();
    let sw: f64 = pts.iter().map(|p| p.2).sum();
    let mx = pts.iter().map(|p| p.2 * p.0).sum::<f64>() / sw;
    let my = pts.iter().map(|p| p.2 * p.1).sum::<f64>() / sw;
    let sxx: f64 = pts.iter().map(|p| p.2 * (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| p.2 * (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| p.2 * (p.1 - my).powi(2)).sum();
    if sxx <= 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = pts.iter().map(|p| p.2 * (p.1 - intercept - slope * p.0).powi(2)).sum();
    let r_squared = if syy > 0.0 { 1.0 - sse / syy } else { 1.0 };
    let (se, ci) = if n > 2 {
        let s2 = sse / (n - 2) as f64;
        let se = (s2 / sxx).sqrt();
        let q = t_quantile(0.95, n - 2);
        (se, (slope - q * se, slope + q * se))
    } else {
        (f64::NAN, (f64::NAN, f64::NAN))
    };
    Some(LogLogFit {
        slope,
        intercept,
        slope_std_error: se,
        slope_ci: ci,
        r_squared,
        n_points: n,
        poor_fit: r_squared < LogLogFit::R2_FLAG,
    })
}

/// Least squares for `y = a·x^{2/3} + b·x`, used as a diagnostic when the
/// pure power law does not describe the loss curve.
pub fn fit_two_term(x: &[f64], y: &[f64]) -> Option<(f64, f64)> {
    if x.len() < 2 {
        return None;
    }
    let (mut s11, mut s12, mut s22, mut r1, mut r2) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (&xi, &yi) in x.iter().zip(y) {
        // Relative residuals: scale each row by 1/y.
        let w = 1.0 / (yi * yi);
        let a = xi.powf(2.0 / 3.0);
        let b = xi;
        s11 += w * a * a;
        s12 += w * a * b;
        s22 += w * b * b;
        r1 += w * a * yi;
        r2 += w * b * yi;
    }
    let det = s11 * s22 - s12 * s12;
    if det.abs() < 1e-300 {
        return None;
    }
    Some(((r1 * s22 - r2 * s12) / det, (s11 * r2 - s12 * r1) / det))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pairwise_matches_naive_on_small() {
        let xs: Vec<f64> = (0..10).map(|i| i as f64).collect();
        assert_eq!(pairwise_sum(&xs), 45.0);
    }

    #[test]
    fn exact_power_law_fit() {
        let x = [1e-4, 1e-3, 1e-2, 1e-1];
        let y: Vec<f64> = x.iter().map(|v: &f64| 3.0 * v.powf(0.7)).collect();
        let fit = fit_loglog(&x, &y, None).unwrap();
        assert!((fit.slope - 0.7).abs() < 1e-12);
        assert!((fit.intercept - 3f64.ln()).abs() < 1e-12);
        assert!(fit.r_squared > 1.0 - 1e-12);
        assert!(!fit.poor_fit);
    }

    #[test]
    fn two_term_recovers_coefficients() {
        let x = [1e-4, 1e-3, 1e-2];
        let y: Vec<f64> = x.iter().map(|v: &f64| 0.02 * v.powf(2.0 / 3.0) + 0.5 * v).collect();
        let (a, b) = fit_two_term(&x, &y).unwrap();
        assert!((a - 0.02).abs() < 1e-10 && (b - 0.5).abs() < 1e-8);
    }

    #[test]
    fn std_error_of_constant_is_zero() {
        let (m, se) = mean_and_std_error(&[2.0; 10]);
        assert_eq!(m, 2.0);
        assert_eq!(se, 0.0);
    }

    #[test]
    fn t_quantile_large_dof_is_normal() {
        assert!((t_quantile(0.95, 100_000) - 1.959964).abs() < 1e-4);
        assert!((t_quantile(0.95, 3) - 3.182446).abs() < 1e-5);
    }
}
