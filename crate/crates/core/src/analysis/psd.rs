//! Welch periodogram and the `A/f + B` spectral model.

use std::f64::consts::PI;
use std::path::Path;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::digamma;

use super::series::FrequencySeries;
use crate::error::{Error, Result};
use crate::metrology::lm::{levenberg_marquardt, LmOptions};

pub const MIN_SEGMENT: usize = 8;
/// Equivalent-dof penalty of 50 %-overlapped Hann segments.
const HANN_OVERLAP_DOF_FACTOR: f64 = 1.056;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Psd {
    pub freqs_hz: Vec<f64>,
    /// One-sided density (Hz²/Hz).
    pub density: Vec<f64>,
    pub segment_len: usize,
    pub segments: usize,
    /// Equivalent chi-square degrees of freedom per bin.
    pub dof: f64,
}

/// Largest power of two not above N/8, floored at 8.
pub fn default_segment_len(n: usize) -> usize {
    let target = (n / 8).max(MIN_SEGMENT);
    let mut s = MIN_SEGMENT;
    while s * 2 <= target {
        s *= 2;
    }
    s
}

pub fn welch_psd(series: &FrequencySeries, segment_len: Option<usize>) -> Result<Psd> {
    welch(&series.values, series.tau0_s, segment_len)
}

/// Hann-windowed, 50 %-overlapped, segment-mean-removed Welch estimate.
pub fn welch(values: &[f64], dt_s: f64, segment_len: Option<usize>) -> Result<Psd> {
    let n = values.len();
    let seg = segment_len.unwrap_or_else(|| default_segment_len(n));
    if seg < MIN_SEGMENT {
        return Err(Error::invalid(format!("segment length {seg} below {MIN_SEGMENT}")));
    }
    if seg > n {
        return Err(Error::InsufficientData(format!("segment length {seg} exceeds {n} samples")));
    }
    if !(dt_s > 0.0) {
        return Err(Error::invalid("sample spacing must be positive"));
    }
    let step = seg / 2;
    let segments = (n - seg) / step + 1;
    let window: Vec<f64> = (0..seg)
        .map(|k| 0.5 * (1.0 - (2.0 * PI * k as f64 / seg as f64).cos()))
        .collect();
    let w2: f64 = window.iter().map(|w| w * w).sum();
    let fs = 1.0 / dt_s;
    let fft = FftPlanner::new().plan_fft_forward(seg);
    let half = seg / 2;
    let mut acc = vec![0.0; half + 1];
    let mut buf = vec![Complex::new(0.0, 0.0); seg];
    for s in 0..segments {
        let chunk = &values[s * step..s * step + seg];
        let mean = chunk.iter().sum::<f64>() / seg as f64;
        for ((b, x), w) in buf.iter_mut().zip(chunk).zip(&window) {
            *b = Complex::new((x - mean) * w, 0.0);
        }
        fft.process(&mut buf);
        for (k, a) in acc.iter_mut().enumerate() {
            let scale = if k == 0 || k == half { 1.0 } else { 2.0 };
            *a += scale * buf[k].norm_sqr() / (fs * w2);
        }
    }
    let density = acc.into_iter().map(|a| a / segments as f64).collect();
    Ok(Psd {
        freqs_hz: (0..=half).map(|k| k as f64 * fs / seg as f64).collect(),
        density,
        segment_len: seg,
        segments,
        dof: 2.0 * segments as f64 / HANN_OVERLAP_DOF_FACTOR,
    })
}

impl Psd {
    /// ∫ S df over the non-DC bins (rectangle rule).
    pub fn integrated_power(&self) -> f64 {
        let df = self.freqs_hz[1] - self.freqs_hz[0];
        self.density[1..].iter().sum::<f64>() * df
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsdFit {
    pub a_hz2: f64,
    pub b_hz2_per_hz: f64,
    pub bins_used: usize,
    pub warnings: Vec<String>,
}

impl PsdFit {
    pub fn density(&self, f_hz: f64) -> f64 {
        self.a_hz2 / f_hz + self.b_hz2_per_hz
    }
}

/// E[ln(χ²_ν / ν)]: the downward bias of a log-averaged periodogram.
pub fn log_bias(dof: f64) -> f64 {
    digamma(dof / 2.0) - (dof / 2.0).ln()
}

/// Least squares of `ln S` against `ln(A/f + B) + bias` over the non-DC bins.
pub fn fit_psd_model(psd: &Psd) -> Result<PsdFit> {
    let bins: Vec<(f64, f64)> = psd
        .freqs_hz
        .iter()
        .zip(&psd.density)
        .skip(1)
        .filter(|(_, &s)| s > 0.0)
        .map(|(&f, &s)| (f, s))
        .collect();
    if bins.len() < 6 {
        return Err(Error::InsufficientData(format!(
            "PSD fit needs 6 positive bins, got {}",
            bins.len()
        )));
    }
    let bias = log_bias(psd.dof);
    let corr = (-bias).exp();
    // start from a linear fit of S against 1/f
    let (mut sxx, mut sx, mut sy, mut sxy) = (0.0, 0.0, 0.0, 0.0);
    let m = bins.len() as f64;
    for &(f, s) in &bins {
        let x = 1.0 / f;
        let y = s * corr;
        sxx += x * x;
        sx += x;
        sy += y;
        sxy += x * y;
    }
    let det = m * sxx - sx * sx;
    let a0 = (m * sxy - sx * sy) / det;
    let b0 = (sxx * sy - sx * sxy) / det;
    let level = sy / m;
    let f_lo = bins[0].0;
    let f_hi = bins[bins.len() - 1].0;
    let start = [
        a0.max(1e-6 * level * f_lo).sqrt(),
        b0.max(1e-6 * level).sqrt(),
    ];
    let sol = levenberg_marquardt(
        |q: &[f64]| {
            bins.iter()
                .map(|&(f, s)| (q[0] * q[0] / f + q[1] * q[1]).ln() + bias - s.ln())
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
    if a / f_lo < 1e-6 * b {
        a = 0.0;
        warnings.push("flicker amplitude clamped at 0".into());
    }
    if b < 1e-6 * a / f_hi {
        b = 0.0;
        warnings.push("white level clamped at 0".into());
    }
    for w in &warnings {
        log::warn!("{w}");
    }
    Ok(PsdFit {
        a_hz2: a,
        b_hz2_per_hz: b,
        bins_used: bins.len(),
        warnings,
    })
}

/// Least-squares slope of ln S against ln f over the non-DC bins.
pub fn log_log_slope(psd: &Psd) -> f64 {
    let pts: Vec<(f64, f64)> = psd
        .freqs_hz
        .iter()
        .zip(&psd.density)
        .skip(1)
        .filter(|(_, &s)| s > 0.0)
        .map(|(&f, &s)| (f.ln(), s.ln()))
        .collect();
    let m = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let num: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let den: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    num / den
}

pub fn write_psd_csv(path: &Path, psd: &Psd) -> Result<()> {
    let mut body = String::from("freq_hz,psd_hz2_per_hz\n");
    for (f, s) in psd.freqs_hz.iter().zip(&psd.density) {
        body.push_str(&format!("{f},{s}\n"));
    }
    std::fs::write(path, body).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::series::synthesize_series;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    #[test]
    fn segment_rule() {
        assert_eq!(default_segment_len(2048), 256);
        assert_eq!(default_segment_len(2000), 128);
        assert_eq!(default_segment_len(40), 8);
    }

    #[test]
    fn white_level_and_parseval() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let d = Normal::new(0.0, 3.0).unwrap();
        let v: Vec<f64> = (0..8192).map(|_| d.sample(&mut rng)).collect();
        let dt = 0.5;
        let p = welch(&v, dt, None).unwrap();
        let mean = p.density[1..p.density.len() - 1].iter().sum::<f64>() / (p.density.len() - 2) as f64;
        assert!((mean / (2.0 * 9.0 * dt) - 1.0).abs() < 0.05);
        assert!((p.integrated_power() / 9.0 - 1.0).abs() < 0.05);
    }

    #[test]
    fn rejects_short_segments() {
        assert!(welch(&[0.0; 64], 1.0, Some(4)).is_err());
        assert!(welch(&[0.0; 64], 1.0, Some(128)).is_err());
    }

    #[test]
    fn bias_is_negative_and_vanishes() {
        assert!(log_bias(2.0) < -0.5);
        assert!(log_bias(1e6).abs() < 1e-5);
    }

    #[test]
    fn recovers_white_plus_flicker() {
        let (a, b) = (20.0, 100.0);
        let v = synthesize_series(a, b, 1 << 15, 1.0, 13).unwrap();
        let fit = fit_psd_model(&welch(&v, 1.0, None).unwrap()).unwrap();
        assert!((fit.a_hz2 / a - 1.0).abs() < 0.2, "{fit:?}");
        assert!((fit.b_hz2_per_hz / b - 1.0).abs() < 0.2, "{fit:?}");
    }

    #[test]
    fn pure_flicker_slope() {
        let v = synthesize_series(1e3, 0.0, 1 << 14, 1.0, 17).unwrap();
        let s = log_log_slope(&welch(&v, 1.0, None).unwrap());
        assert!((s + 1.0).abs() < 0.05, "{s}");
    }
}
