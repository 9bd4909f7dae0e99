//! Metric time series: `metrics.csv` I/O, moving averages and boxplot summaries.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiment::Metric;
use crate::metrology::quantile_sorted;

pub const METRICS_HEADER: &str = "timestamp_s,device,metric,estimate,lower,upper";
pub const DEFAULT_MOVING_WINDOW: usize = 50;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub timestamp_s: f64,
    pub device: String,
    pub metric: String,
    /// `NaN` for a failed fit, `inf` for an unresolved lifetime.
    pub estimate: f64,
    pub lower: Option<f64>,
    pub upper: Option<f64>,
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl MetricRecord {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{}\n",
            self.timestamp_s,
            self.device,
            self.metric,
            self.estimate,
            opt(self.lower),
            opt(self.upper)
        )
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricSeries {
    pub records: Vec<MetricRecord>,
}

impl MetricSeries {
    /// Device names in order of first appearance.
    pub fn devices(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for r in &self.records {
            if !out.contains(&r.device) {
                out.push(r.device.clone());
            }
        }
        out
    }

    pub fn metrics(&self, device: &str) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for r in self.records.iter().filter(|r| r.device == device) {
            if !out.contains(&r.metric) {
                out.push(r.metric.clone());
            }
        }
        out
    }

    pub fn select(&self, device: &str, metric: &str) -> Vec<&MetricRecord> {
        self.records
            .iter()
            .filter(|r| r.device == device && r.metric == metric)
            .collect()
    }

    pub fn values(&self, device: &str, metric: &str) -> (Vec<f64>, Vec<f64>) {
        self.select(device, metric)
            .into_iter()
            .map(|r| (r.timestamp_s, r.estimate))
            .unzip()
    }

    /// Timestamps strictly increase per (device, metric) and bounds bracket estimates.
    pub fn validate(&self) -> Result<()> {
        for d in self.devices() {
            for m in self.metrics(&d) {
                let rows = self.select(&d, &m);
                if rows.windows(2).any(|w| !(w[1].timestamp_s > w[0].timestamp_s)) {
                    return Err(Error::invalid(format!("{d}/{m}: timestamps not strictly increasing")));
                }
                for r in rows {
                    if r.estimate.is_nan() {
                        continue;
                    }
                    if r.lower.is_some_and(|l| l > r.estimate) || r.upper.is_some_and(|u| u < r.estimate) {
                        return Err(Error::invalid(format!(
                            "{d}/{m} at {} s: bounds do not bracket the estimate",
                            r.timestamp_s
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from(METRICS_HEADER);
        s.push('\n');
        for r in &self.records {
            s.push_str(&r.csv_row());
        }
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_csv(path, &text)
    }

    pub fn parse_csv(path: &Path, text: &str) -> Result<Self> {
        let err = |line: usize, message: String| Error::Parse {
            path: path.to_path_buf(),
            line: line as u64,
            message,
        };
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, h)) if h.trim() == METRICS_HEADER => {}
            Some((_, h)) => return Err(err(1, format!("expected header '{METRICS_HEADER}', found '{h}'"))),
            None => return Err(err(1, "empty file".into())),
        }
        let num = |line: usize, what: &str, s: &str| -> Result<f64> {
            s.parse::<f64>().map_err(|_| err(line, format!("bad {what} '{s}'")))
        };
        let mut records = Vec::new();
        for (i, line) in lines {
            let n = i + 1;
            if line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split(',').map(str::trim).collect();
            if f.len() != 6 {
                return Err(err(n, format!("expected 6 fields, found {}", f.len())));
            }
            let bound = |what: &str, s: &str| -> Result<Option<f64>> {
                if s.is_empty() {
                    Ok(None)
                } else {
                    num(n, what, s).map(Some)
                }
            };
            records.push(MetricRecord {
                timestamp_s: num(n, "timestamp_s", f[0])?,
                device: f[1].to_string(),
                metric: f[2].to_string(),
                estimate: num(n, "estimate", f[3])?,
                lower: bound("lower", f[4])?,
                upper: bound("upper", f[5])?,
            });
        }
        Ok(Self { records })
    }
}

/// Centred moving mean over `window` samples, shrinking at the edges.
///
/// Non-finite samples are skipped; a window with none left yields `NaN`.
pub fn moving_average(values: &[f64], window: usize) -> Result<Vec<f64>> {
    if window == 0 {
        return Err(Error::invalid("moving-average window must be >= 1"));
    }
    let n = values.len();
    let back = (window - 1) / 2;
    let mut cum = vec![0.0; n + 1];
    let mut cnt = vec![0usize; n + 1];
    for (i, &v) in values.iter().enumerate() {
        let ok = v.is_finite();
        cum[i + 1] = cum[i] + if ok { v } else { 0.0 };
        cnt[i + 1] = cnt[i] + ok as usize;
    }
    Ok((0..n)
        .map(|i| {
            let lo = i.saturating_sub(back);
            let hi = (i + window - back).min(n);
            let c = cnt[hi] - cnt[lo];
            if c == 0 {
                f64::NAN
            } else if window == 1 {
                values[i]
            } else {
                (cum[hi] - cum[lo]) / c as f64
            }
        })
        .collect())
}

/// Tukey boxplot statistics over the finite values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxStats {
    pub n: usize,
    /// Samples excluded because they were `inf` (no decay resolvable).
    pub n_unresolved: usize,
    pub n_gaps: usize,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub whisker_low: f64,
    pub whisker_high: f64,
    pub outliers: Vec<f64>,
}

pub fn summarize(values: &[f64]) -> Result<BoxStats> {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return Err(Error::InsufficientData("no finite values to summarise".into()));
    }
    v.sort_by(|a, b| a.total_cmp(b));
    let q1 = quantile_sorted(&v, 0.25);
    let q3 = quantile_sorted(&v, 0.75);
    let iqr = q3 - q1;
    let (lo_fence, hi_fence) = (q1 - 1.5 * iqr, q3 + 1.5 * iqr);
    let inside: Vec<f64> = v.iter().copied().filter(|x| *x >= lo_fence && *x <= hi_fence).collect();
    Ok(BoxStats {
        n: v.len(),
        n_unresolved: values.iter().filter(|x| x.is_infinite()).count(),
        n_gaps: values.iter().filter(|x| x.is_nan()).count(),
        median: quantile_sorted(&v, 0.5),
        q1,
        q3,
        whisker_low: inside.first().copied().unwrap_or(q1),
        whisker_high: inside.last().copied().unwrap_or(q3),
        outliers: v.iter().copied().filter(|x| *x < lo_fence || *x > hi_fence).collect(),
    })
}

/// Display label and scale for a metric name: logical lifetimes in ms,
/// physical lifetimes in μs, frequencies in kHz.
pub fn display_label(metric: &str) -> (String, &'static str, f64) {
    match metric.parse::<Metric>() {
        Ok(Metric::T1L) => ("T_1^L".into(), "ms", 1e-3),
        Ok(Metric::T2EL) => ("T_2E^L".into(), "ms", 1e-3),
        Ok(Metric::T2RL) => ("T_2R^L".into(), "us", 1.0),
        Ok(Metric::DeltaF) => ("Δf^L".into(), "kHz", 1e-3),
        Ok(Metric::GammaErasure) => ("Γ_erasure".into(), "1/ms", 1e3),
        Ok(Metric::T1(m)) => (format!("T_1 ({m})"), "us", 1.0),
        Ok(Metric::T2E(m)) => (format!("T_2E ({m})"), "us", 1.0),
        Ok(Metric::T2R(m)) => (format!("T_2R ({m})"), "us", 1.0),
        Ok(Metric::ModeDeltaF(m)) => (format!("Δf ({m})"), "kHz", 1e-3),
        Err(_) => (metric.to_string(), "", 1.0),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub device: String,
    pub metric: String,
    pub label: String,
    pub unit: String,
    pub stats: BoxStats,
}

/// Boxplot statistics per (device, metric) in stored units.
pub fn summarize_series(series: &MetricSeries) -> Vec<SummaryRow> {
    let mut rows = Vec::new();
    for d in series.devices() {
        for m in series.metrics(&d) {
            let (_, v) = series.values(&d, &m);
            match summarize(&v) {
                Ok(stats) => {
                    let (label, unit, _) = display_label(&m);
                    rows.push(SummaryRow {
                        device: d.clone(),
                        metric: m.clone(),
                        label,
                        unit: unit.into(),
                        stats,
                    });
                }
                // every estimate past the grid still deserves a row
                Err(_) if v.iter().any(|x| x.is_infinite()) => {
                    let (label, unit, _) = display_label(&m);
                    rows.push(SummaryRow {
                        device: d.clone(),
                        metric: m.clone(),
                        label,
                        unit: unit.into(),
                        stats: BoxStats {
                            n: 0,
                            n_unresolved: v.iter().filter(|x| x.is_infinite()).count(),
                            n_gaps: v.iter().filter(|x| x.is_nan()).count(),
                            median: f64::INFINITY,
                            q1: f64::INFINITY,
                            q3: f64::INFINITY,
                            whisker_low: f64::INFINITY,
                            whisker_high: f64::INFINITY,
                            outliers: Vec::new(),
                        },
                    });
                }
                Err(e) => log::warn!("{d}/{m}: {e}"),
            }
        }
    }
    rows
}

/// Median table with metrics as rows and devices as columns.
pub fn format_median_table(rows: &[SummaryRow]) -> String {
    let mut devices: Vec<&str> = Vec::new();
    let mut metrics: Vec<&str> = Vec::new();
    for r in rows {
        if !devices.contains(&r.device.as_str()) {
            devices.push(&r.device);
        }
        if !metrics.contains(&r.metric.as_str()) {
            metrics.push(&r.metric);
        }
    }
    let mut out = String::new();
    let _ = write!(out, "{:<18}", "metric");
    for d in &devices {
        let _ = write!(out, "{:>14}", d);
    }
    out.push('\n');
    for m in metrics {
        let (label, unit, scale) = display_label(m);
        let _ = write!(out, "{:<18}", format!("{label} [{unit}]"));
        for d in &devices {
            match rows.iter().find(|r| r.device == *d && r.metric == m) {
                Some(r) if r.stats.median.is_infinite() => {
                    let _ = write!(out, "{:>14}", "unresolved");
                }
                Some(r) => {
                    let _ = write!(out, "{:>14.4}", r.stats.median * scale);
                }
                None => {
                    let _ = write!(out, "{:>14}", "-");
                }
            }
        }
        out.push('\n');
    }
    out
}
