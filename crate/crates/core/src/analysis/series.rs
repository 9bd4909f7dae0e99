//! Uniformly sampled frequency-deviation series.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::dynamics::noise::spectral_path;
use crate::error::{Error, Result};

pub const MIN_SAMPLES: usize = 16;
/// Allowed relative spacing jitter before resampling.
pub const MAX_JITTER: f64 = 0.01;
pub const SERIES_HEADER: &str = "timestamp_s,delta_f_hz,source";
const SHORT_SERIES_HEADER: &str = "timestamp_s,delta_f_hz";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeriesSource {
    Logical,
    DMode,
    QMode,
}

impl fmt::Display for SeriesSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SeriesSource::Logical => "logical",
            SeriesSource::DMode => "d_mode",
            SeriesSource::QMode => "q_mode",
        })
    }
}

impl FromStr for SeriesSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "logical" => Ok(SeriesSource::Logical),
            "d_mode" | "d" => Ok(SeriesSource::DMode),
            "q_mode" | "q" => Ok(SeriesSource::QMode),
            other => Err(Error::invalid(format!("unknown series source '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrequencySeries {
    pub tau0_s: f64,
    pub timestamps_s: Vec<f64>,
    /// Deviations from the series mean (Hz).
    pub values: Vec<f64>,
    pub source: SeriesSource,
    /// Set when the input needed resampling onto a uniform grid.
    pub resampled: bool,
}

impl FrequencySeries {
    /// Builds a series, dropping non-finite samples, resampling onto the median
    /// spacing when jitter exceeds 1 %, and removing the mean.
    pub fn new(timestamps_s: &[f64], values: &[f64], source: SeriesSource) -> Result<Self> {
        if timestamps_s.len() != values.len() {
            return Err(Error::invalid("timestamps and values differ in length"));
        }
        let (t, v): (Vec<f64>, Vec<f64>) = timestamps_s
            .iter()
            .zip(values)
            .filter(|(t, v)| t.is_finite() && v.is_finite())
            .map(|(&t, &v)| (t, v))
            .unzip();
        if t.len() < MIN_SAMPLES {
            return Err(Error::InsufficientData(format!(
                "frequency series needs {MIN_SAMPLES} samples, got {}",
                t.len()
            )));
        }
        let steps: Vec<f64> = t.windows(2).map(|w| w[1] - w[0]).collect();
        if steps.iter().any(|&d| !(d > 0.0)) {
            return Err(Error::invalid("timestamps must be strictly increasing"));
        }
        let mut sorted = steps.clone();
        sorted.sort_by(|a, b| a.total_cmp(b));
        let tau0 = sorted[sorted.len() / 2];
        let uniform = steps.iter().all(|d| ((d - tau0) / tau0).abs() <= MAX_JITTER);
        let (t, mut v, resampled) = if uniform {
            (t, v, false)
        } else {
            let n = ((t[t.len() - 1] - t[0]) / tau0).floor() as usize + 1;
            let grid: Vec<f64> = (0..n).map(|k| t[0] + k as f64 * tau0).collect();
            let vals = interpolate(&t, &v, &grid);
            (grid, vals, true)
        };
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        v.iter_mut().for_each(|x| *x -= mean);
        Ok(Self {
            tau0_s: tau0,
            timestamps_s: t,
            values: v,
            source,
            resampled,
        })
    }

    /// Uniform series from samples spaced by `tau0_s`.
    pub fn uniform(values: &[f64], tau0_s: f64, source: SeriesSource) -> Result<Self> {
        if !(tau0_s > 0.0 && tau0_s.is_finite()) {
            return Err(Error::invalid("sample spacing must be positive"));
        }
        let t: Vec<f64> = (0..values.len()).map(|k| k as f64 * tau0_s).collect();
        Self::new(&t, values, source)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

fn interpolate(t: &[f64], v: &[f64], grid: &[f64]) -> Vec<f64> {
    let mut j = 0;
    grid.iter()
        .map(|&g| {
            while j + 2 < t.len() && t[j + 1] < g {
                j += 1;
            }
            let (t0, t1) = (t[j], t[j + 1]);
            let f = ((g - t0) / (t1 - t0)).clamp(0.0, 1.0);
            v[j] + f * (v[j + 1] - v[j])
        })
        .collect()
}

/// Gaussian series with one-sided PSD `A/f + B` (Hz²/Hz), spacing `tau0_s`.
pub fn synthesize_series(a_hz2: f64, b_hz2_per_hz: f64, n: usize, tau0_s: f64, seed: u64) -> Result<Vec<f64>> {
    if !(a_hz2 >= 0.0 && b_hz2_per_hz >= 0.0) {
        return Err(Error::invalid("noise amplitudes must be >= 0"));
    }
    if n < 2 || !(tau0_s > 0.0) {
        return Err(Error::invalid("need n >= 2 samples and positive spacing"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let fft = FftPlanner::new().plan_fft_inverse(n);
    Ok(spectral_path(|f| a_hz2 / f + b_hz2_per_hz, n, tau0_s, &fft, &mut rng))
}

pub fn write_series_csv(path: &Path, series: &[FrequencySeries]) -> Result<()> {
    let mut body = String::from(SERIES_HEADER);
    body.push('\n');
    for s in series {
        for (t, v) in s.timestamps_s.iter().zip(&s.values) {
            body.push_str(&format!("{t},{v},{}\n", s.source));
        }
    }
    std::fs::write(path, body).map_err(|e| Error::io(path, e))
}

/// Raw rows grouped by source, in order of first appearance.
pub fn read_series_csv(path: &Path) -> Result<Vec<(SeriesSource, Vec<f64>, Vec<f64>)>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line: line as u64,
        message,
    };
    let mut lines = text.lines().enumerate();
    // a two-column file is a single logical series
    let width = match lines.next() {
        Some((_, h)) if h.trim() == SERIES_HEADER => 3,
        Some((_, h)) if h.trim() == SHORT_SERIES_HEADER => 2,
        Some((_, h)) => return Err(err(1, format!("expected header '{SERIES_HEADER}', found '{h}'"))),
        None => return Err(err(1, "empty file".into())),
    };
    let mut out: Vec<(SeriesSource, Vec<f64>, Vec<f64>)> = Vec::new();
    for (i, line) in lines {
        let n = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        if f.len() != width {
            return Err(err(n, format!("expected {width} fields, found {}", f.len())));
        }
        let t: f64 = f[0].parse().map_err(|_| err(n, format!("bad timestamp '{}'", f[0])))?;
        let v: f64 = f[1].parse().map_err(|_| err(n, format!("bad delta_f_hz '{}'", f[1])))?;
        let src: SeriesSource = match f.get(2) {
            Some(s) => s.parse().map_err(|e: Error| err(n, e.to_string()))?,
            None => SeriesSource::Logical,
        };
        match out.iter_mut().find(|(s, _, _)| *s == src) {
            Some((_, ts, vs)) => {
                ts.push(t);
                vs.push(v);
            }
            None => out.push((src, vec![t], vec![v])),
        }
    }
    if out.is_empty() {
        return Err(err(2, "no data rows".into()));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn removes_mean() {
        let v: Vec<f64> = (0..20).map(|i| 5.0 + (i % 2) as f64).collect();
        let s = FrequencySeries::uniform(&v, 2.0, SeriesSource::Logical).unwrap();
        assert!(s.values.iter().sum::<f64>().abs() < 1e-12);
        assert_eq!(s.tau0_s, 2.0);
        assert!(!s.resampled);
    }

    #[test]
    fn too_short() {
        assert!(FrequencySeries::uniform(&[1.0; 15], 1.0, SeriesSource::DMode).is_err());
    }

    #[test]
    fn jittered_input_is_resampled() {
        let mut t: Vec<f64> = (0..40).map(|i| i as f64 * 100.0).collect();
        t[10] += 7.0;
        let v: Vec<f64> = t.iter().map(|x| x * 0.01).collect();
        let s = FrequencySeries::new(&t, &v, SeriesSource::QMode).unwrap();
        assert!(s.resampled);
        assert_eq!(s.len(), 40);
        // a linear ramp survives linear interpolation
        let d: Vec<f64> = s.values.windows(2).map(|w| w[1] - w[0]).collect();
        assert!(d.iter().all(|x| (x - 1.0).abs() < 1e-9));
    }

    #[test]
    fn gaps_are_skipped() {
        let t: Vec<f64> = (0..30).map(|i| i as f64).collect();
        let mut v = vec![1.0; 30];
        v[4] = f64::NAN;
        let s = FrequencySeries::new(&t, &v, SeriesSource::Logical).unwrap();
        assert!(s.resampled);
        assert_eq!(s.len(), 30);
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.csv");
        let v: Vec<f64> = (0..20).map(|i| (i as f64).sin()).collect();
        let s = FrequencySeries::uniform(&v, 100.0, SeriesSource::DMode).unwrap();
        write_series_csv(&p, std::slice::from_ref(&s)).unwrap();
        let back = read_series_csv(&p).unwrap();
        assert_eq!(back.len(), 1);
        assert_eq!(back[0].0, SeriesSource::DMode);
        assert_eq!(back[0].2, s.values);
    }
}
