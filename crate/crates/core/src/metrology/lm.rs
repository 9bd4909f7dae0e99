//! Damped Gauss-Newton (Levenberg-Marquardt) with central-difference Jacobians.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, FitDiagnostics, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LmOptions {
    pub max_iterations: usize,
    /// Converged once ‖δp‖ / (‖p‖ + tol) falls below this.
    pub relative_step_tol: f64,
    /// Relative Jacobian step.
    pub jacobian_step: f64,
    /// Absolute floor on the Jacobian step.
    pub jacobian_floor: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        Self {
            max_iterations: 500,
            relative_step_tol: 1e-9,
            jacobian_step: 1e-6,
            jacobian_floor: 1e-9,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LmSolution {
    pub params: Vec<f64>,
    pub residuals: Vec<f64>,
    /// ½ Σ r².
    pub cost: f64,
    /// Standard errors from s² (JᵀJ)⁻¹; NaN when singular or underdetermined.
    pub std_errors: Vec<f64>,
    pub diagnostics: FitDiagnostics,
}

fn cost_of(r: &[f64]) -> f64 {
    0.5 * r.iter().map(|x| x * x).sum::<f64>()
}

/// Central-difference Jacobian of `f` at `p` (rows: residuals, columns: parameters).
pub fn numeric_jacobian<F>(f: &F, p: &[f64], opts: &LmOptions) -> DMatrix<f64>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let m = f(p).len();
    let n = p.len();
    let mut jac = DMatrix::zeros(m, n);
    let mut q = p.to_vec();
    for j in 0..n {
        let h = (opts.jacobian_step * p[j].abs()).max(opts.jacobian_floor);
        q[j] = p[j] + h;
        let up = f(&q);
        q[j] = p[j] - h;
        let down = f(&q);
        q[j] = p[j];
        for i in 0..m {
            jac[(i, j)] = (up[i] - down[i]) / (2.0 * h);
        }
    }
    jac
}

/// Minimises ½‖r(p)‖² from `p0`.
pub fn levenberg_marquardt<F>(residuals: F, p0: &[f64], opts: &LmOptions) -> Result<LmSolution>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let n = p0.len();
    let mut p = p0.to_vec();
    let mut r = residuals(&p);
    if r.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonConvergence(FitDiagnostics {
            iterations: 0,
            converged: false,
            initial_cost: f64::NAN,
            final_cost: f64::NAN,
            last_relative_step: f64::NAN,
            message: "non-finite residuals at the initial point".into(),
        }));
    }
    let initial_cost = cost_of(&r);
    let mut cost = initial_cost;
    let mut lambda = 1e-3;
    let mut last_step = f64::INFINITY;
    let mut converged = cost == 0.0;
    let mut iterations = 0;
    let mut jac = numeric_jacobian(&residuals, &p, opts);
    let mut fresh = true;

    while !converged && iterations < opts.max_iterations {
        iterations += 1;
        if !fresh {
            jac = numeric_jacobian(&residuals, &p, opts);
            fresh = true;
        }
        let jt = jac.transpose();
        let a = &jt * &jac;
        let g = &jt * DVector::from_column_slice(&r);
        let scale = a.diagonal().iter().copied().fold(0.0, f64::max).max(1e-300);
        let mut damped = a.clone();
        for i in 0..n {
            damped[(i, i)] += lambda * a[(i, i)].max(1e-12 * scale);
        }
        let Some(delta) = damped.lu().solve(&(-g)) else {
            lambda *= 10.0;
            if lambda > 1e20 {
                break;
            }
            continue;
        };
        let p_norm = p.iter().map(|x| x * x).sum::<f64>().sqrt();
        let rel = delta.norm() / (p_norm + opts.relative_step_tol);
        let trial: Vec<f64> = p.iter().zip(delta.iter()).map(|(a, b)| a + b).collect();
        let r_trial = residuals(&trial);
        let c_trial = if r_trial.iter().all(|x| x.is_finite()) {
            cost_of(&r_trial)
        } else {
            f64::INFINITY
        };
        last_step = rel;
        if c_trial <= cost {
            p = trial;
            r = r_trial;
            cost = c_trial;
            lambda = (lambda / 3.0).max(1e-15);
            fresh = false;
            if rel < opts.relative_step_tol || cost == 0.0 {
                converged = true;
            }
        } else {
            if rel < opts.relative_step_tol {
                // no downhill step is resolvable any more
                converged = true;
            }
            lambda *= 4.0;
            if lambda > 1e20 {
                converged = rel < 1e-6;
                break;
            }
        }
    }

    let diagnostics = FitDiagnostics {
        iterations,
        converged,
        initial_cost,
        final_cost: cost,
        last_relative_step: last_step,
        message: if converged {
            "converged".into()
        } else {
            "iteration limit reached".into()
        },
    };
    if !converged {
        return Err(Error::NonConvergence(diagnostics));
    }
    let jac = numeric_jacobian(&residuals, &p, opts);
    let m = r.len();
    let std_errors = if m > n {
        let s2 = 2.0 * cost / (m - n) as f64;
        match (jac.transpose() * &jac).try_inverse() {
            Some(inv) => (0..n).map(|i| (s2 * inv[(i, i)]).max(0.0).sqrt()).collect(),
            None => vec![f64::NAN; n],
        }
    } else {
        vec![f64::NAN; n]
    };
    Ok(LmSolution {
        params: p,
        residuals: r,
        cost,
        std_errors,
        diagnostics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_exponential_recovery() {
        let t: Vec<f64> = (0..40).map(|i| i as f64 * 2.5).collect();
        let truth = [0.8, 0.03, 0.1];
        let y: Vec<f64> = t.iter().map(|&x| truth[0] * (-truth[1] * x).exp() + truth[2]).collect();
        let f = |p: &[f64]| -> Vec<f64> {
            t.iter()
                .zip(&y)
                .map(|(&x, &v)| p[0] * (-p[1] * x).exp() + p[2] - v)
                .collect()
        };
        let sol = levenberg_marquardt(f, &[0.5, 0.01, 0.0], &LmOptions::default()).unwrap();
        for (a, b) in sol.params.iter().zip(truth) {
            assert!((a / b - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn jacobian_matches_analytic() {
        let f = |p: &[f64]| vec![p[0] * p[0], p[0] * p[1].sin(), (p[1] * 2.0).exp()];
        let p = [1.3, 0.4];
        let j = numeric_jacobian(&f, &p, &LmOptions::default());
        let exact = [[2.6, 0.0], [0.4f64.sin(), 1.3 * 0.4f64.cos()], [0.0, 2.0 * 0.8f64.exp()]];
        for i in 0..3 {
            for k in 0..2 {
                assert!((j[(i, k)] - exact[i][k]).abs() < 1e-7);
            }
        }
    }

    #[test]
    fn iteration_cap_reports_diagnostics() {
        let f = |p: &[f64]| vec![p[0] - 1.0, 10.0 * (p[1] - p[0] * p[0])];
        let opts = LmOptions {
            max_iterations: 1,
            ..LmOptions::default()
        };
        match levenberg_marquardt(f, &[-1.2, 1.0], &opts) {
            Err(Error::NonConvergence(d)) => {
                assert_eq!(d.iterations, 1);
                assert!(!d.converged);
            }
            other => panic!("{other:?}"),
        }
    }
}
