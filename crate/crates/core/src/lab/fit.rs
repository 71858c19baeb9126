//! Log–log least-squares fit of an algebraic convergence rate.

use std::fmt;

/// Errors at or below this are treated as exact agreement.
pub const EXACT_TOL: f64 = 1e-11;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum RateFit {
    /// Every error is at rounding level; there is no rate to fit.
    Exact,
    /// Fewer than two usable points at or above the median `n`.
    Insufficient,
    /// `err ≈ C n^{-alpha}`.
    Fitted { alpha: f64, log_c: f64, points: usize },
}

impl fmt::Display for RateFit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RateFit::Exact => f.write_str("exact"),
            RateFit::Insufficient => f.write_str("insufficient data"),
            RateFit::Fitted { alpha, points, .. } => write!(f, "alpha = {alpha:.4} ({points} points)"),
        }
    }
}

impl RateFit {
    pub fn alpha(&self) -> Option<f64> {
        match self {
            RateFit::Fitted { alpha, .. } => Some(*alpha),
            _ => None,
        }
    }
}

pub fn median(ns: &[usize]) -> f64 {
    let mut v: Vec<usize> = ns.to_vec();
    v.sort_unstable();
    let k = v.len();
    if k == 0 {
        return 0.0;
    }
    if k % 2 == 1 {
        v[k / 2] as f64
    } else {
        (v[k / 2 - 1] + v[k / 2]) as f64 / 2.0
    }
}

/// Fits `log err = log C - alpha log n` over the points with `n` at or
/// above the median of `ns`, skipping zero errors.
pub fn fit_rate(ns: &[usize], errors: &[f64]) -> RateFit {
    assert_eq!(ns.len(), errors.len());
    if errors.iter().all(|e| e.abs() <= EXACT_TOL) {
        return RateFit::Exact;
    }
    let cut = median(ns);
    let pts: Vec<(f64, f64)> = ns
        .iter()
        .zip(errors)
        .filter(|(n, e)| **n as f64 >= cut && e.abs() > 0.0 && e.is_finite())
        .map(|(n, e)| ((*n as f64).ln(), e.abs().ln()))
        .collect();
    if pts.len() < 2 {
        return RateFit::Insufficient;
    }
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    RateFit::Fitted { alpha: -slope, log_c: my - slope * mx, points: pts.len() }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_power_law() {
        let ns = [4, 8, 16, 32, 64];
        let errs: Vec<f64> = ns.iter().map(|&n| 3.0 * (n as f64).powf(-1.25)).collect();
        match fit_rate(&ns, &errs) {
            RateFit::Fitted { alpha, log_c, points } => {
                assert!((alpha - 1.25).abs() < 1e-12);
                assert!((log_c - 3f64.ln()).abs() < 1e-12);
                assert_eq!(points, 3);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn median_cut() {
        assert_eq!(median(&[8, 16, 24]), 16.0);
        assert_eq!(median(&[1, 2, 3, 4]), 2.5);
        // The point below the median is ignored even if it breaks the law.
        let fit = fit_rate(&[8, 16, 24], &[1.0, 1.0 / 16.0, 1.0 / 24.0]);
        assert!((fit.alpha().unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_cases() {
        assert_eq!(fit_rate(&[2, 4, 8], &[0.0, 1e-13, 0.0]), RateFit::Exact);
        assert_eq!(fit_rate(&[2, 4, 8], &[0.1, 0.05, 0.0]), RateFit::Insufficient);
        assert_eq!(RateFit::Exact.to_string(), "exact");
    }
}
