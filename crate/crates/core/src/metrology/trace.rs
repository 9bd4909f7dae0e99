//! Per-delay assignment counts and the postselected signals derived from them.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::device::DimonLevel;
use crate::dynamics::ExperimentKind;
use crate::error::{Error, Result};

pub const TRACE_HEADER: &str = "delay_us,n00,n01,n10,n_total,init_label,timestamp_s";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub delay_us: f64,
    pub n00: u64,
    pub n01: u64,
    pub n10: u64,
    pub n_total: u64,
}

impl TracePoint {
    pub fn assigned(&self) -> u64 {
        self.n00 + self.n01 + self.n10
    }

    pub fn count_of(&self, level: DimonLevel) -> u64 {
        match level {
            DimonLevel::G00 => self.n00,
            DimonLevel::L01 => self.n01,
            DimonLevel::L10 => self.n10,
            _ => 0,
        }
    }
}

/// One prepared state measured over a delay sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceData {
    pub kind: ExperimentKind,
    pub init_label: String,
    pub timestamp_s: f64,
    pub points: Vec<TracePoint>,
}

impl TraceData {
    pub fn validate(&self) -> Result<()> {
        for w in self.points.windows(2) {
            if !(w[1].delay_us > w[0].delay_us) {
                return Err(Error::invalid(format!(
                    "delays must be strictly increasing ({} then {})",
                    w[0].delay_us, w[1].delay_us
                )));
            }
        }
        for p in &self.points {
            if p.assigned() > p.n_total {
                return Err(Error::invalid(format!("counts exceed n_total at {} us", p.delay_us)));
            }
        }
        Ok(())
    }

    pub fn delays(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.delay_us).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Postselected {
    pub p0l: f64,
    pub p1l: f64,
    pub erasure: f64,
}

/// Discards `|00⟩` shots and renormalises the logical populations.
pub fn postselect(n00: u64, n01: u64, n10: u64) -> Result<Postselected> {
    let logical = n01 + n10;
    if logical == 0 {
        return Err(Error::EmptyLogicalSubspace);
    }
    let p0l = n10 as f64 / logical as f64;
    Ok(Postselected {
        p0l,
        p1l: 1.0 - p0l,
        erasure: n00 as f64 / (n00 + logical) as f64,
    })
}

/// Mean of the two cross-assignment probabilities.
pub fn bitflip_probability(p1l_given_init0: f64, p0l_given_init1: f64) -> Result<f64> {
    for p in [p1l_given_init0, p0l_given_init1] {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::Domain(format!("probability {p} outside [0, 1]")));
        }
    }
    Ok(0.5 * (p1l_given_init0 + p0l_given_init1))
}

/// A fit-ready curve.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Signal {
    pub delays_us: Vec<f64>,
    pub values: Vec<f64>,
    /// Delays dropped because the logical subspace was empty.
    pub flagged_us: Vec<f64>,
}

impl Signal {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

fn find_init<'a>(traces: &'a [TraceData], level: DimonLevel) -> Result<&'a TraceData> {
    let label = level.label();
    traces
        .iter()
        .find(|t| t.init_label == label)
        .ok_or_else(|| Error::InsufficientData(format!("no trace prepared in {label}")))
}

/// `P(1_L | init 1_L) − P(1_L | init 0_L)` at delays present in both traces.
pub fn bitflip_difference(traces: &[TraceData]) -> Result<Signal> {
    let one = find_init(traces, DimonLevel::LOGICAL_ONE)?;
    let zero = find_init(traces, DimonLevel::LOGICAL_ZERO)?;
    let mut s = Signal::default();
    for a in &one.points {
        let Some(b) = zero.points.iter().find(|b| b.delay_us == a.delay_us) else {
            continue;
        };
        match (postselect(a.n00, a.n01, a.n10), postselect(b.n00, b.n01, b.n10)) {
            (Ok(x), Ok(y)) => {
                s.delays_us.push(a.delay_us);
                s.values.push(x.p1l - y.p1l);
            }
            _ => s.flagged_us.push(a.delay_us),
        }
    }
    Ok(s)
}

/// Per-delay bit-flip probability from both initialisations.
pub fn bitflip_probability_signal(traces: &[TraceData]) -> Result<Signal> {
    let one = find_init(traces, DimonLevel::LOGICAL_ONE)?;
    let zero = find_init(traces, DimonLevel::LOGICAL_ZERO)?;
    let mut s = Signal::default();
    for a in &one.points {
        let Some(b) = zero.points.iter().find(|b| b.delay_us == a.delay_us) else {
            continue;
        };
        match (postselect(a.n00, a.n01, a.n10), postselect(b.n00, b.n01, b.n10)) {
            (Ok(x), Ok(y)) => {
                s.delays_us.push(a.delay_us);
                s.values.push(bitflip_probability(y.p1l, x.p0l)?);
            }
            _ => s.flagged_us.push(a.delay_us),
        }
    }
    Ok(s)
}

/// Postselected `P(0_L)` along one trace.
pub fn logical_zero_signal(trace: &TraceData) -> Signal {
    let mut s = Signal::default();
    for p in &trace.points {
        match postselect(p.n00, p.n01, p.n10) {
            Ok(ps) => {
                s.delays_us.push(p.delay_us);
                s.values.push(ps.p0l);
            }
            Err(_) => s.flagged_us.push(p.delay_us),
        }
    }
    s
}

/// Echo contrast `2 P(0_L) − 1`.
pub fn echo_contrast_signal(trace: &TraceData) -> Signal {
    let mut s = logical_zero_signal(trace);
    s.values.iter_mut().for_each(|v| *v = 2.0 * *v - 1.0);
    s
}

/// Fraction assigned to `|00⟩`, averaged over all supplied traces at each delay.
pub fn erasure_signal(traces: &[TraceData]) -> Result<Signal> {
    let first = traces
        .first()
        .ok_or_else(|| Error::InsufficientData("no traces".into()))?;
    let mut s = Signal::default();
    for p in &first.points {
        let mut acc = 0.0;
        let mut n = 0;
        for t in traces {
            if let Some(q) = t.points.iter().find(|q| q.delay_us == p.delay_us) {
                if q.assigned() > 0 {
                    acc += q.n00 as f64 / q.assigned() as f64;
                    n += 1;
                }
            }
        }
        if n == traces.len() {
            s.delays_us.push(p.delay_us);
            s.values.push(acc / n as f64);
        } else {
            s.flagged_us.push(p.delay_us);
        }
    }
    Ok(s)
}

/// Fraction of assigned shots in one level (physical-mode references).
pub fn level_fraction_signal(trace: &TraceData, level: DimonLevel) -> Signal {
    let mut s = Signal::default();
    for p in &trace.points {
        if p.assigned() == 0 {
            s.flagged_us.push(p.delay_us);
        } else {
            s.delays_us.push(p.delay_us);
            s.values.push(p.count_of(level) as f64 / p.assigned() as f64);
        }
    }
    s
}

pub fn write_trace_csv(path: &Path, traces: &[TraceData]) -> Result<()> {
    std::fs::write(path, trace_csv_string(traces)).map_err(|e| Error::io(path, e))
}

pub fn trace_csv_string(traces: &[TraceData]) -> String {
    let mut body = String::from(TRACE_HEADER);
    body.push('\n');
    for t in traces {
        for p in &t.points {
            body.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                p.delay_us, p.n00, p.n01, p.n10, p.n_total, t.init_label, t.timestamp_s
            ));
        }
    }
    body
}

/// Reads a trace file; rows are grouped by `init_label` in order of first appearance.
pub fn read_trace_csv(path: &Path, kind: ExperimentKind) -> Result<Vec<TraceData>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_trace_csv(path, &text, kind)
}

pub fn parse_trace_csv(path: &Path, text: &str, kind: ExperimentKind) -> Result<Vec<TraceData>> {
    let err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line: line as u64,
        message,
    };
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == TRACE_HEADER => {}
        Some((_, h)) => return Err(err(1, format!("expected header '{TRACE_HEADER}', found '{h}'"))),
        None => return Err(err(1, "empty file".into())),
    }
    let mut out: Vec<TraceData> = Vec::new();
    for (i, line) in lines {
        let n = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        if f.len() != 7 {
            return Err(err(n, format!("expected 7 fields, found {}", f.len())));
        }
        let float = |s: &str, what: &str| {
            s.parse::<f64>()
                .ok()
                .filter(|v| !v.is_nan())
                .ok_or_else(|| err(n, format!("bad {what} '{s}'")))
        };
        let count = |s: &str, what: &str| s.parse::<u64>().map_err(|_| err(n, format!("bad {what} '{s}'")));
        let point = TracePoint {
            delay_us: float(f[0], "delay_us")?,
            n00: count(f[1], "n00")?,
            n01: count(f[2], "n01")?,
            n10: count(f[3], "n10")?,
            n_total: count(f[4], "n_total")?,
        };
        if point.assigned() > point.n_total {
            return Err(err(n, "n00 + n01 + n10 exceeds n_total".into()));
        }
        let label = f[5].to_string();
        let ts = float(f[6], "timestamp_s")?;
        match out.iter_mut().find(|t| t.init_label == label) {
            Some(t) => {
                if let Some(last) = t.points.last() {
                    if !(point.delay_us > last.delay_us) {
                        return Err(err(n, format!("delay {} is not increasing", point.delay_us)));
                    }
                }
                t.points.push(point);
            }
            None => out.push(TraceData {
                kind,
                init_label: label,
                timestamp_s: ts,
                points: vec![point],
            }),
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
    fn postselect_examples() {
        let a = postselect(0, 300, 700).unwrap();
        assert_eq!((a.p0l, a.erasure), (0.7, 0.0));
        assert!((a.p1l - 0.3).abs() < 1e-15);
        assert_eq!(a.p0l + a.p1l, 1.0);
        let b = postselect(100, 450, 450).unwrap();
        assert_eq!((b.p0l, b.p1l), (0.5, 0.5));
        assert!((b.erasure - 0.1).abs() < 1e-15);
        assert!(matches!(postselect(1000, 0, 0), Err(Error::EmptyLogicalSubspace)));
    }

    #[test]
    fn bitflip_probability_examples() {
        assert_eq!(bitflip_probability(0.0, 0.0).unwrap(), 0.0);
        assert!((bitflip_probability(0.1, 0.1).unwrap() - 0.1).abs() < 1e-15);
        assert!(bitflip_probability(1.1, 0.0).is_err());
        assert!(bitflip_probability(0.0, -0.1).is_err());
    }

    fn trace(label: &str, pts: &[(f64, u64, u64, u64)]) -> TraceData {
        TraceData {
            kind: ExperimentKind::Bitflip,
            init_label: label.into(),
            timestamp_s: 100.0,
            points: pts
                .iter()
                .map(|&(d, a, b, c)| TracePoint {
                    delay_us: d,
                    n00: a,
                    n01: b,
                    n10: c,
                    n_total: a + b + c,
                })
                .collect(),
        }
    }

    #[test]
    fn difference_skips_flagged_points() {
        let traces = vec![
            trace("01", &[(0.0, 0, 100, 0), (5.0, 100, 0, 0), (10.0, 10, 80, 10)]),
            trace("10", &[(0.0, 0, 0, 100), (5.0, 5, 5, 90), (10.0, 10, 10, 80)]),
        ];
        let s = bitflip_difference(&traces).unwrap();
        assert_eq!(s.delays_us, vec![0.0, 10.0]);
        assert_eq!(s.flagged_us, vec![5.0]);
        assert_eq!(s.values[0], 1.0);
        assert!((s.values[1] - (80.0 / 90.0 - 10.0 / 90.0)).abs() < 1e-15);
    }

    #[test]
    fn csv_round_trip_and_line_numbers() {
        let traces = vec![
            trace("01", &[(0.0, 1, 98, 1), (2.5, 3, 95, 2)]),
            trace("10", &[(0.0, 0, 1, 99), (2.5, 4, 1, 95)]),
        ];
        let text = trace_csv_string(&traces);
        let back = parse_trace_csv(Path::new("t.csv"), &text, ExperimentKind::Bitflip).unwrap();
        assert_eq!(back, traces);
        let broken = text.replacen("3,95,2", "3,x,2", 1);
        match parse_trace_csv(Path::new("t.csv"), &broken, ExperimentKind::Bitflip) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }
}
