//! Overlapping Allan deviation and its white + flicker model.

use std::f64::consts::LN_2;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::series::FrequencySeries;
use crate::error::{Error, Result};
use crate::metrology::lm::{levenberg_marquardt, LmOptions};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AllanPoint {
    pub tau_s: f64,
    pub sigma_hz: f64,
    /// Number of overlapping differences averaged.
    pub n_diff: usize,
}

/// Averaging factors 1, 2, 4, … up to N/3.
pub fn octave_factors(n: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut m = 1;
    while 3 * m <= n {
        out.push(m);
        m *= 2;
    }
    out
}

/// Overlapping Allan deviation at `τ = m τ0` for each factor `m`.
pub fn overlapping_allan(series: &FrequencySeries, factors: &[usize]) -> Result<Vec<AllanPoint>> {
    let y = &series.values;
    let n = y.len();
    let mut cum = Vec::with_capacity(n + 1);
    cum.push(0.0);
    for v in y {
        cum.push(cum.last().unwrap() + v);
    }
    factors
        .iter()
        .map(|&m| {
            if m == 0 || 3 * m > n {
                return Err(Error::invalid(format!(
                    "averaging factor {m} outside [1, N/3] for N = {n}"
                )));
            }
            let n_diff = n + 1 - 2 * m;
            if n_diff < 2 {
                return Err(Error::InsufficientData(format!("only {n_diff} differences at m = {m}")));
            }
            let mut acc = 0.0;
            for j in 0..n_diff {
                let d = (cum[j + 2 * m] - cum[j + m]) - (cum[j + m] - cum[j]);
                acc += d * d;
            }
            let var = acc / (2.0 * (m * m) as f64 * n_diff as f64);
            Ok(AllanPoint {
                tau_s: m as f64 * series.tau0_s,
                sigma_hz: var.sqrt(),
                n_diff,
            })
        })
        .collect()
}

pub fn allan_curve(series: &FrequencySeries) -> Result<Vec<AllanPoint>> {
    overlapping_allan(series, &octave_factors(series.len()))
}

/// How the white and flicker terms combine.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AllanModelForm {
    /// σ² = B/(2τ) + 2 ln2 · A.
    #[default]
    Quadrature,
    /// σ = (B/2)^½ τ^−½ + (2 ln2 · A)^½.
    LinearSum,
}

impl AllanModelForm {
    pub fn sigma(self, a: f64, b: f64, tau: f64) -> f64 {
        match self {
            AllanModelForm::Quadrature => (b / (2.0 * tau) + 2.0 * LN_2 * a).sqrt(),
            AllanModelForm::LinearSum => (b / 2.0).sqrt() / tau.sqrt() + (2.0 * LN_2 * a).sqrt(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllanFit {
    /// Flicker amplitude A (Hz²).
    pub a_hz2: f64,
    /// White level B (Hz²/Hz).
    pub b_hz2_per_hz: f64,
    pub form: AllanModelForm,
    pub points_used: usize,
    pub warnings: Vec<String>,
}

impl AllanFit {
    pub fn sigma(&self, tau: f64) -> f64 {
        self.form.sigma(self.a_hz2, self.b_hz2_per_hz, tau)
    }
}

pub fn fit_allan_model(curve: &[AllanPoint]) -> Result<AllanFit> {
    fit_allan_model_with(curve, AllanModelForm::default())
}

/// Weighted least squares in log σ; each point is weighted by √(n_diff / m).
pub fn fit_allan_model_with(curve: &[AllanPoint], form: AllanModelForm) -> Result<AllanFit> {
    let pts: Vec<&AllanPoint> = curve.iter().filter(|p| p.sigma_hz > 0.0 && p.tau_s > 0.0).collect();
    if pts.len() < 4 {
        return Err(Error::InsufficientData(format!(
            "Allan fit needs 4 points with σ > 0, got {}",
            pts.len()
        )));
    }
    let tmin = pts.iter().map(|p| p.tau_s).fold(f64::INFINITY, f64::min);
    let tmax = pts.iter().map(|p| p.tau_s).fold(0.0, f64::max);
    if (tmax / tmin).log10() < 1.5 {
        return Err(Error::InsufficientData("Allan fit needs τ spanning 1.5 decades".into()));
    }
    let weights: Vec<f64> = pts
        .iter()
        .map(|p| (p.n_diff as f64 / (p.tau_s / tmin).round().max(1.0)).sqrt())
        .collect();
    // linear start on σ² = B/(2τ) + 2ln2 A
    let (mut s11, mut s12, mut s22, mut r1, mut r2) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (p, w) in pts.iter().zip(&weights) {
        let s2 = p.sigma_hz * p.sigma_hz;
        let w2 = w * w / (s2 * s2);
        let x1 = 1.0 / (2.0 * p.tau_s);
        let x2 = 2.0 * LN_2;
        s11 += w2 * x1 * x1;
        s12 += w2 * x1 * x2;
        s22 += w2 * x2 * x2;
        r1 += w2 * x1 * s2;
        r2 += w2 * x2 * s2;
    }
    let det = s11 * s22 - s12 * s12;
    let scale = pts.iter().map(|p| p.sigma_hz * p.sigma_hz).fold(0.0, f64::max);
    let floor_b = 1e-6 * scale * tmin;
    let floor_a = 1e-6 * scale;
    let (b0, a0) = if det.abs() > 0.0 {
        ((r1 * s22 - r2 * s12) / det, (s11 * r2 - s12 * r1) / det)
    } else {
        (scale * tmin, scale)
    };
    let start = [a0.max(floor_a).sqrt(), b0.max(floor_b).sqrt()];
    let sol = levenberg_marquardt(
        |q: &[f64]| {
            pts.iter()
                .zip(&weights)
                .map(|(p, w)| w * (form.sigma(q[0] * q[0], q[1] * q[1], p.tau_s).ln() - p.sigma_hz.ln()))
                .collect()
        },
        &start,
        &LmOptions {
            jacobian_floor: 1e-12 * start[0].max(start[1]),
            ..LmOptions::default()
        },
    )?;
    let mut a = sol.params[0] * sol.params[0];
    let mut b = sol.params[1] * sol.params[1];
    let mut warnings = Vec::new();
    // a term that never reaches 1e-6 of the curve is indistinguishable from zero
    if pts.iter().all(|p| 2.0 * LN_2 * a < 1e-6 * p.sigma_hz * p.sigma_hz) {
        a = 0.0;
        warnings.push("flicker amplitude clamped at 0".into());
    }
    if pts.iter().all(|p| b / (2.0 * p.tau_s) < 1e-6 * p.sigma_hz * p.sigma_hz) {
        b = 0.0;
        warnings.push("white level clamped at 0".into());
    }
    for w in &warnings {
        log::warn!("{w}");
    }
    Ok(AllanFit {
        a_hz2: a,
        b_hz2_per_hz: b,
        form,
        points_used: pts.len(),
        warnings,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AllanBump {
    pub tau_start_s: f64,
    pub tau_end_s: f64,
    /// Largest σ_measured / σ_model over the band.
    pub peak_ratio: f64,
}

/// Excess over the model that a bump must show at each τ.
pub const BUMP_EXCESS: f64 = 0.5;
/// Consecutive τ points required for a bump.
pub const BUMP_MIN_RUN: usize = 2;

/// Bands where σ exceeds the fitted model by more than 50 % at ≥ 2 consecutive τ.
///
/// The model is refit without the flagged points until the flags stop changing,
/// so a bump does not drag the baseline up.
pub fn flag_bumps(curve: &[AllanPoint], form: AllanModelForm) -> Result<(AllanFit, Vec<AllanBump>)> {
    let mut excluded = vec![false; curve.len()];
    let mut fit = fit_allan_model_with(curve, form)?;
    for _ in 0..5 {
        let flags = excess_flags(curve, &fit);
        let runs = runs_of(&flags);
        let mut next = vec![false; curve.len()];
        for &(s, e) in &runs {
            next[s..=e].iter_mut().for_each(|x| *x = true);
        }
        if next == excluded {
            break;
        }
        excluded = next;
        let kept: Vec<AllanPoint> = curve
            .iter()
            .zip(&excluded)
            .filter(|(_, &x)| !x)
            .map(|(p, _)| *p)
            .collect();
        match fit_allan_model_with(&kept, form) {
            Ok(f) => fit = f,
            Err(_) => break,
        }
    }
    let flags = excess_flags(curve, &fit);
    let bumps = runs_of(&flags)
        .into_iter()
        .map(|(s, e)| AllanBump {
            tau_start_s: curve[s].tau_s,
            tau_end_s: curve[e].tau_s,
            peak_ratio: curve[s..=e]
                .iter()
                .map(|p| p.sigma_hz / fit.sigma(p.tau_s))
                .fold(0.0, f64::max),
        })
        .collect();
    Ok((fit, bumps))
}

fn excess_flags(curve: &[AllanPoint], fit: &AllanFit) -> Vec<bool> {
    curve
        .iter()
        .map(|p| p.sigma_hz > (1.0 + BUMP_EXCESS) * fit.sigma(p.tau_s))
        .collect()
}

fn runs_of(flags: &[bool]) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, &f) in flags.iter().chain(std::iter::once(&false)).enumerate() {
        match (f, start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                if i - s >= BUMP_MIN_RUN {
                    out.push((s, i - 1));
                }
                start = None;
            }
            _ => {}
        }
    }
    out
}

pub fn write_allan_csv(path: &Path, curve: &[AllanPoint]) -> Result<()> {
    let mut body = String::from("tau_s,sigma_hz\n");
    for p in curve {
        body.push_str(&format!("{},{}\n", p.tau_s, p.sigma_hz));
    }
    std::fs::write(path, body).map_err(|e| Error::io(path, e))
}
