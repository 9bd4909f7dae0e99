//! Decay and oscillation models fitted to postselected signals.
//!
//! Times are in μs and rates in 1/μs throughout; derived lifetimes are μs.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::lm::{levenberg_marquardt, LmOptions};
use crate::error::{Error, FitDiagnostics, Result};

/// Short-time window for linear decay fits (μs).
pub const DEFAULT_LINEAR_CUTOFF_US: f64 = 30.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum FitModel {
    /// `c − Γ t` over delays ≤ cutoff.
    LinearShort { cutoff_us: f64 },
    /// `A e^{−Γt} cos(2π Δf t + φ0) + C`.
    Ramsey,
    /// `A (1 − e^{−Γt}) + D`.
    Erasure,
    /// `A e^{−Γt} + C`.
    ExpDecay,
}

impl FitModel {
    pub fn linear_short() -> Self {
        FitModel::LinearShort {
            cutoff_us: DEFAULT_LINEAR_CUTOFF_US,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            FitModel::LinearShort { .. } => "linear_short",
            FitModel::Ramsey => "ramsey",
            FitModel::Erasure => "erasure",
            FitModel::ExpDecay => "exp_decay",
        }
    }

    fn param_names(&self) -> &'static [(&'static str, &'static str)] {
        match self {
            FitModel::LinearShort { .. } => &[("offset", ""), ("gamma", "1/us")],
            FitModel::Ramsey => &[
                ("amplitude", ""),
                ("gamma", "1/us"),
                ("detuning", "MHz"),
                ("phase", "rad"),
                ("offset", ""),
            ],
            FitModel::Erasure | FitModel::ExpDecay => &[("amplitude", ""), ("gamma", "1/us"), ("offset", "")],
        }
    }

    /// Model value at `t` (μs) for parameters in `param_names` order.
    pub fn eval(&self, p: &[f64], t: f64) -> f64 {
        match self {
            FitModel::LinearShort { .. } => p[0] - p[1] * t,
            FitModel::Ramsey => p[0] * (-p[1] * t).exp() * (2.0 * PI * p[2] * t + p[3]).cos() + p[4],
            FitModel::Erasure => p[0] * (1.0 - (-p[1] * t).exp()) + p[2],
            FitModel::ExpDecay => p[0] * (-p[1] * t).exp() + p[2],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitParam {
    pub name: String,
    pub unit: String,
    pub value: f64,
    pub std_error: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub lower: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub upper: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub model: FitModel,
    pub params: Vec<FitParam>,
    /// Lifetimes and unit conversions of the fitted parameters.
    pub derived: Vec<FitParam>,
    pub window_us: [f64; 2],
    pub delays_us: Vec<f64>,
    pub fitted: Vec<f64>,
    pub residuals: Vec<f64>,
    pub diagnostics: FitDiagnostics,
    pub warnings: Vec<String>,
}

impl FitResult {
    pub fn param(&self, name: &str) -> Option<&FitParam> {
        self.params.iter().chain(self.derived.iter()).find(|p| p.name == name)
    }

    pub fn value(&self, name: &str) -> Option<f64> {
        self.param(name).map(|p| p.value)
    }

    pub fn estimates(&self) -> Vec<f64> {
        self.params.iter().map(|p| p.value).collect()
    }

    pub fn gamma(&self) -> f64 {
        self.value("gamma").unwrap_or(f64::NAN)
    }

    /// Γ exceeds twice its standard error.
    pub fn decay_resolved(&self) -> bool {
        match self.param("gamma") {
            Some(g) => g.value > 0.0 && (g.std_error.is_nan() || g.value > 2.0 * g.std_error),
            None => false,
        }
    }

    /// Installs primary bounds and propagates them to the derived quantities.
    pub fn set_bounds(&mut self, lower: &[f64], upper: &[f64]) {
        for (p, (&lo, &hi)) in self.params.iter_mut().zip(lower.iter().zip(upper)) {
            p.lower = Some(lo);
            p.upper = Some(hi);
        }
        let gamma = self.param("gamma").cloned();
        let detuning = self.param("detuning").cloned();
        for d in &mut self.derived {
            if d.unit == "us" {
                if let Some(g) = &gamma {
                    d.lower = g.upper.map(reciprocal_lifetime);
                    d.upper = g.lower.map(reciprocal_lifetime);
                }
            } else if d.name == "detuning_hz" {
                if let Some(f) = &detuning {
                    d.lower = f.lower.map(|x| x * 1e6);
                    d.upper = f.upper.map(|x| x * 1e6);
                }
            }
        }
    }

    pub fn clear_bounds(&mut self) {
        for p in self.params.iter_mut().chain(self.derived.iter_mut()) {
            p.lower = None;
            p.upper = None;
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// 1/Γ, infinite when no decay is resolvable.
pub fn reciprocal_lifetime(gamma: f64) -> f64 {
    if gamma > 0.0 {
        1.0 / gamma
    } else {
        f64::INFINITY
    }
}

fn finish(
    model: FitModel,
    t: &[f64],
    y: &[f64],
    values: Vec<f64>,
    std_errors: Vec<f64>,
    diagnostics: FitDiagnostics,
    mut warnings: Vec<String>,
) -> FitResult {
    let fitted: Vec<f64> = t.iter().map(|&x| model.eval(&values, x)).collect();
    let residuals: Vec<f64> = y.iter().zip(&fitted).map(|(a, b)| a - b).collect();
    let params: Vec<FitParam> = model
        .param_names()
        .iter()
        .zip(values.iter().zip(&std_errors))
        .map(|(&(name, unit), (&value, &se))| FitParam {
            name: name.into(),
            unit: unit.into(),
            value,
            std_error: se,
            lower: None,
            upper: None,
        })
        .collect();
    let gamma = params.iter().find(|p| p.name == "gamma").map(|p| p.value).unwrap_or(f64::NAN);
    let mut derived = vec![FitParam {
        name: "lifetime".into(),
        unit: "us".into(),
        value: reciprocal_lifetime(gamma),
        std_error: params
            .iter()
            .find(|p| p.name == "gamma")
            .map(|p| p.std_error / (gamma * gamma))
            .unwrap_or(f64::NAN),
        lower: None,
        upper: None,
    }];
    if let Some(f) = params.iter().find(|p| p.name == "detuning") {
        derived.push(FitParam {
            name: "detuning_hz".into(),
            unit: "Hz".into(),
            value: f.value * 1e6,
            std_error: f.std_error * 1e6,
            lower: None,
            upper: None,
        });
    }
    if !(gamma > 0.0) {
        warnings.push("no decay resolvable (fitted rate <= 0)".into());
    }
    FitResult {
        model,
        params,
        derived,
        window_us: [
            t.first().copied().unwrap_or(f64::NAN),
            t.last().copied().unwrap_or(f64::NAN),
        ],
        delays_us: t.to_vec(),
        fitted,
        residuals,
        diagnostics,
        warnings,
    }
}

fn check_input(t: &[f64], y: &[f64], min: usize, what: &str) -> Result<()> {
    if t.len() != y.len() {
        return Err(Error::invalid("delays and values differ in length"));
    }
    if t.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::invalid("non-finite input to fit"));
    }
    if t.len() < min {
        return Err(Error::InsufficientData(format!("{what} needs at least {min} points, got {}", t.len())));
    }
    Ok(())
}

fn closed_form(message: &str) -> FitDiagnostics {
    FitDiagnostics {
        iterations: 0,
        converged: true,
        initial_cost: f64::NAN,
        final_cost: f64::NAN,
        last_relative_step: 0.0,
        message: message.into(),
    }
}

fn peak_to_peak(y: &[f64]) -> f64 {
    let hi = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = y.iter().copied().fold(f64::INFINITY, f64::min);
    hi - lo
}

fn is_flat(y: &[f64]) -> bool {
    let scale = y.iter().map(|v| v.abs()).fold(1.0, f64::max);
    peak_to_peak(y) <= 1e-12 * scale
}

/// Ordinary least squares `c − Γ t` on points with delay ≤ cutoff.
pub fn fit_linear_short(delays_us: &[f64], values: &[f64], cutoff_us: f64) -> Result<FitResult> {
    check_input(delays_us, values, 0, "linear fit")?;
    let (t, y): (Vec<f64>, Vec<f64>) = delays_us
        .iter()
        .zip(values)
        .filter(|(&t, _)| t <= cutoff_us)
        .map(|(&t, &y)| (t, y))
        .unzip();
    if t.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "linear fit needs 3 points within {cutoff_us} us, got {}",
            t.len()
        )));
    }
    let n = t.len() as f64;
    let tm = t.iter().sum::<f64>() / n;
    let ym = y.iter().sum::<f64>() / n;
    let sxx: f64 = t.iter().map(|x| (x - tm).powi(2)).sum();
    if !(sxx > 0.0) {
        return Err(Error::InsufficientData("all delays in the window coincide".into()));
    }
    let sxy: f64 = t.iter().zip(&y).map(|(x, v)| (x - tm) * (v - ym)).sum();
    let slope = sxy / sxx;
    let offset = ym - slope * tm;
    let model = FitModel::LinearShort { cutoff_us };
    let values_fit = vec![offset, -slope];
    let sse: f64 = t
        .iter()
        .zip(&y)
        .map(|(&x, &v)| (v - model.eval(&values_fit, x)).powi(2))
        .sum();
    let s2 = if t.len() > 2 { sse / (n - 2.0) } else { f64::NAN };
    let se_slope = (s2 / sxx).sqrt();
    let se_offset = (s2 * (1.0 / n + tm * tm / sxx)).sqrt();
    let mut warnings = Vec::new();
    if slope >= 0.0 {
        log::warn!("linear fit slope {slope:e} >= 0: no decay resolvable");
    }
    let mut diag = closed_form("closed-form least squares");
    diag.final_cost = 0.5 * sse;
    diag.initial_cost = 0.5 * sse;
    if slope >= 0.0 {
        warnings.push("slope >= 0".into());
    }
    Ok(finish(model, &t, &y, values_fit, vec![se_offset, se_slope], diag, warnings))
}

/// Direct DFT power of mean-subtracted data on a frequency grid (MHz).
fn periodogram_peak(t: &[f64], y: &[f64]) -> Result<(f64, f64)> {
    let n = t.len();
    let mean = y.iter().sum::<f64>() / n as f64;
    let span = t[n - 1] - t[0];
    let mut steps: Vec<f64> = t.windows(2).map(|w| w[1] - w[0]).collect();
    steps.sort_by(|a, b| a.total_cmp(b));
    let dt = steps[steps.len() / 2];
    if !(span > 0.0 && dt > 0.0) {
        return Err(Error::InsufficientData("delays do not span a positive interval".into()));
    }
    let f_max = 0.5 / dt;
    let df = 1.0 / (10.0 * span);
    let bins = (f_max / df).floor() as usize;
    let mut best = (0.0, 0.0, 0.0);
    for k in 0..=bins {
        let f = k as f64 * df;
        let (mut re, mut im) = (0.0, 0.0);
        for (&x, &v) in t.iter().zip(y) {
            let a = -2.0 * PI * f * x;
            re += (v - mean) * a.cos();
            im += (v - mean) * a.sin();
        }
        let power = re * re + im * im;
        if power > best.0 {
            best = (power, f, im.atan2(re));
        }
    }
    if !(best.0 > 0.0) || best.1 < 0.5 / span {
        return Err(Error::NoOscillation);
    }
    Ok((best.1, best.2))
}

pub fn fit_ramsey(delays_us: &[f64], values: &[f64]) -> Result<FitResult> {
    check_input(delays_us, values, 8, "ramsey fit")?;
    let t = delays_us;
    let y = values;
    if is_flat(y) {
        return Err(Error::NoOscillation);
    }
    let (f0, phi0) = periodogram_peak(t, y)?;
    let c0 = y.iter().sum::<f64>() / y.len() as f64;
    let mut a0 = 0.5 * peak_to_peak(y);
    // log-envelope regression where the carrier is well away from its zeros
    let (mut sx, mut sy, mut sxx, mut sxy, mut m) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (&x, &v) in t.iter().zip(y) {
        let carrier = (2.0 * PI * f0 * x + phi0).cos();
        if carrier.abs() > 0.5 {
            let z = (v - c0) / (a0 * carrier);
            if z > 0.0 {
                let lz = z.ln();
                sx += x;
                sy += lz;
                sxx += x * x;
                sxy += x * lz;
                m += 1.0;
            }
        }
    }
    let span = t[t.len() - 1] - t[0];
    let mut g0 = 1.0 / span;
    if m >= 2.0 {
        let den = m * sxx - sx * sx;
        if den > 0.0 {
            let slope = (m * sxy - sx * sy) / den;
            let icpt = (sy - slope * sx) / m;
            if slope < 0.0 && slope.is_finite() {
                g0 = -slope;
                a0 *= icpt.exp().clamp(0.2, 5.0);
            }
        }
    }
    let model = FitModel::Ramsey;
    let start = [a0, g0, f0, phi0, c0];
    let sol = levenberg_marquardt(
        |p: &[f64]| t.iter().zip(y).map(|(&x, &v)| model.eval(p, x) - v).collect(),
        &start,
        &LmOptions::default(),
    )?;
    let mut p = sol.params.clone();
    if p[0] < 0.0 {
        p[0] = -p[0];
        p[3] += PI;
    }
    p[3] = (p[3] + PI).rem_euclid(2.0 * PI) - PI;
    Ok(finish(model, t, y, p, sol.std_errors, sol.diagnostics, Vec::new()))
}

fn half_change_rate(t: &[f64], y: &[f64], from: f64, to: f64) -> f64 {
    let target = 0.5 * (from + to);
    let rising = to > from;
    for (&x, &v) in t.iter().zip(y) {
        if x > 0.0 && ((rising && v >= target) || (!rising && v <= target)) {
            return 2f64.ln() / x;
        }
    }
    let span = t[t.len() - 1] - t[0];
    1.0 / span.max(f64::MIN_POSITIVE)
}

/// `A (1 − e^{−Γt}) + D`; a flat trace returns Γ = 0 with a warning.
pub fn fit_erasure(delays_us: &[f64], values: &[f64]) -> Result<FitResult> {
    check_input(delays_us, values, 4, "erasure fit")?;
    let model = FitModel::Erasure;
    if is_flat(values) {
        log::warn!("flat erasure trace: no leakage resolvable");
        let d = values[0];
        return Ok(finish(
            model,
            delays_us,
            values,
            vec![0.0, 0.0, d],
            vec![f64::NAN; 3],
            closed_form("flat trace"),
            vec!["flat trace; leakage rate set to 0".into()],
        ));
    }
    let d0 = values[0];
    let last = values[values.len() - 1];
    let a0 = if (last - d0).abs() > 0.0 { last - d0 } else { peak_to_peak(values) };
    let g0 = half_change_rate(delays_us, values, d0, d0 + a0);
    fit_nonlinear(model, delays_us, values, &[a0, g0, d0])
}

/// `A e^{−Γt} + C`.
pub fn fit_exp_decay(delays_us: &[f64], values: &[f64]) -> Result<FitResult> {
    check_input(delays_us, values, 4, "exponential fit")?;
    let model = FitModel::ExpDecay;
    if is_flat(values) {
        return Ok(finish(
            model,
            delays_us,
            values,
            vec![0.0, 0.0, values[0]],
            vec![f64::NAN; 3],
            closed_form("flat trace"),
            vec!["flat trace; decay rate set to 0".into()],
        ));
    }
    let c0 = values[values.len() - 1];
    let a0 = values[0] - c0;
    let g0 = half_change_rate(delays_us, values, values[0], c0);
    fit_nonlinear(model, delays_us, values, &[a0, g0, c0])
}

fn fit_nonlinear(model: FitModel, t: &[f64], y: &[f64], start: &[f64]) -> Result<FitResult> {
    let sol = levenberg_marquardt(
        |p: &[f64]| t.iter().zip(y).map(|(&x, &v)| model.eval(p, x) - v).collect(),
        start,
        &LmOptions::default(),
    )?;
    Ok(finish(model, t, y, sol.params, sol.std_errors, sol.diagnostics, Vec::new()))
}

/// Fits a signal with the given model.
pub fn fit_signal(model: &FitModel, delays_us: &[f64], values: &[f64]) -> Result<FitResult> {
    match *model {
        FitModel::LinearShort { cutoff_us } => fit_linear_short(delays_us, values, cutoff_us),
        FitModel::Ramsey => fit_ramsey(delays_us, values),
        FitModel::Erasure => fit_erasure(delays_us, values),
        FitModel::ExpDecay => fit_exp_decay(delays_us, values),
    }
}
