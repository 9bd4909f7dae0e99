//! Residual bootstrap for fit parameter bounds.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::fits::{fit_signal, FitResult};
use crate::error::{Error, Result};

pub const DEFAULT_RESAMPLES: usize = 250;
pub const DEFAULT_QUANTILE: f64 = 0.05;
/// Largest tolerated fraction of failed refits.
pub const MAX_DROP_FRACTION: f64 = 0.2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapBounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub resamples: usize,
    pub dropped: usize,
}

/// Type-7 quantile of a sorted slice.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 0 {
        return f64::NAN;
    }
    let h = (n - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Resamples variance-corrected residuals onto the fitted curve, refits each synthetic trace with
/// the same model, and returns per-parameter `quantile` / `1 − quantile` bounds
/// widened where needed to bracket the estimate.
pub fn bootstrap_bounds(fit: &FitResult, n_resamples: usize, quantile: f64, seed: u64) -> Result<BootstrapBounds> {
    if !(quantile > 0.0 && quantile < 0.5) {
        return Err(Error::invalid("bootstrap quantile must lie in (0, 0.5)"));
    }
    let est = fit.estimates();
    if n_resamples == 0 {
        return Ok(BootstrapBounds {
            lower: est.clone(),
            upper: est,
            resamples: 0,
            dropped: 0,
        });
    }
    if fit.residuals.is_empty() {
        return Err(Error::InsufficientData("fit has no residuals".into()));
    }
    let n = fit.residuals.len();
    // fitted residuals understate the noise by sqrt((n - p) / n)
    let p = est.len();
    let inflate = if n > p { (n as f64 / (n - p) as f64).sqrt() } else { 1.0 };
    let residuals: Vec<f64> = fit.residuals.iter().map(|r| r * inflate).collect();
    let draws: Vec<Option<Vec<f64>>> = (0..n_resamples as u64)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(k);
            let y: Vec<f64> = fit
                .fitted
                .iter()
                .map(|f| f + residuals[rng.random_range(0..n)])
                .collect();
            fit_signal(&fit.model, &fit.delays_us, &y)
                .ok()
                .map(|r| r.estimates())
                .filter(|p| p.iter().all(|v| v.is_finite()))
        })
        .collect();
    let kept: Vec<Vec<f64>> = draws.into_iter().flatten().collect();
    let dropped = n_resamples - kept.len();
    if dropped as f64 > MAX_DROP_FRACTION * n_resamples as f64 {
        return Err(Error::InsufficientData(format!(
            "{dropped} of {n_resamples} bootstrap refits failed"
        )));
    }
    if dropped > 0 {
        log::warn!("{dropped} of {n_resamples} bootstrap refits dropped");
    }
    let mut lower = Vec::with_capacity(est.len());
    let mut upper = Vec::with_capacity(est.len());
    for (j, &e) in est.iter().enumerate() {
        let mut col: Vec<f64> = kept.iter().map(|p| p[j]).collect();
        col.sort_by(|a, b| a.total_cmp(b));
        lower.push(quantile_sorted(&col, quantile).min(e));
        upper.push(quantile_sorted(&col, 1.0 - quantile).max(e));
    }
    Ok(BootstrapBounds {
        lower,
        upper,
        resamples: n_resamples,
        dropped,
    })
}

/// Runs the bootstrap and installs its bounds on the fit.
pub fn attach_bounds(fit: &mut FitResult, n_resamples: usize, quantile: f64, seed: u64) -> Result<BootstrapBounds> {
    let b = bootstrap_bounds(fit, n_resamples, quantile, seed)?;
    if n_resamples == 0 {
        fit.clear_bounds();
    } else {
        fit.set_bounds(&b.lower, &b.upper);
    }
    Ok(b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrology::fits::fit_linear_short;

    #[test]
    fn type7_quantiles() {
        let v = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(quantile_sorted(&v, 0.25), 2.0);
        assert_eq!(quantile_sorted(&v, 0.5), 3.0);
        assert!((quantile_sorted(&v, 0.05) - 1.2).abs() < 1e-12);
        assert_eq!(quantile_sorted(&[7.0], 0.9), 7.0);
    }

    #[test]
    fn zero_residuals_collapse_bounds() {
        let t: Vec<f64> = (0..20).map(|i| i as f64).collect();
        let y: Vec<f64> = t.iter().map(|x| 2.0 - 0.25 * x).collect();
        let fit = fit_linear_short(&t, &y, 30.0).unwrap();
        let b = bootstrap_bounds(&fit, DEFAULT_RESAMPLES, DEFAULT_QUANTILE, 1).unwrap();
        for ((lo, hi), e) in b.lower.iter().zip(&b.upper).zip(fit.estimates()) {
            assert!((lo - e).abs() < 1e-12 && (hi - e).abs() < 1e-12);
        }
    }

    #[test]
    fn deterministic_and_bracketing() {
        let t: Vec<f64> = (0..25).map(|i| i as f64).collect();
        let y: Vec<f64> = t
            .iter()
            .enumerate()
            .map(|(i, x)| 1.0 - 0.01 * x + 0.003 * (((i * 37) % 11) as f64 - 5.0))
            .collect();
        let fit = fit_linear_short(&t, &y, 30.0).unwrap();
        let a = bootstrap_bounds(&fit, 250, 0.05, 9).unwrap();
        let b = bootstrap_bounds(&fit, 250, 0.05, 9).unwrap();
        assert_eq!(a, b);
        for ((lo, hi), e) in a.lower.iter().zip(&a.upper).zip(fit.estimates()) {
            assert!(*lo <= e && e <= *hi);
        }
    }

    #[test]
    fn zero_resamples_returns_estimate() {
        let t: Vec<f64> = (0..5).map(|i| i as f64).collect();
        let mut fit = fit_linear_short(&t, &[1.0, 0.9, 0.85, 0.7, 0.6], 30.0).unwrap();
        attach_bounds(&mut fit, 0, 0.05, 0).unwrap();
        assert!(fit.params.iter().all(|p| p.lower.is_none()));
    }
}
