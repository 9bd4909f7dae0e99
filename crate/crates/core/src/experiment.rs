//! Simulated acquisition: trajectories, IQ readout, assignment counts, and the
//! coherence metrics extracted from them.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::device::{DeviceParams, DimonLevel, Mode};
use crate::dynamics::{shot_rng, ExperimentKind, PulseSequence, TrajectoryEngine, TrajectoryOutcome};
use crate::error::{Error, FitDiagnostics, Result};
use crate::metrology::{
    attach_bounds, bitflip_difference, echo_contrast_signal, erasure_signal, fit_erasure, fit_exp_decay,
    fit_linear_short, fit_ramsey, level_fraction_signal, logical_zero_signal, FitResult, Signal, TraceData,
    TracePoint, DEFAULT_LINEAR_CUTOFF_US, DEFAULT_QUANTILE, DEFAULT_RESAMPLES,
};
use crate::readout::{fit_gmm, generate_iq, readout_t1_us, GmmClassifier, Iq, ReadoutModel, ShotRecord};

pub const DEFAULT_TRAINING_SHOTS: usize = 10_000;

/// Mixes a path of indices into a base seed (SplitMix64 finaliser per step).
pub fn derive_seed(base: u64, path: &[u64]) -> u64 {
    let mut x = base;
    for &p in path {
        x ^= p.wrapping_add(0x9e37_79b9_7f4a_7c15).wrapping_add(x << 6).wrapping_add(x >> 2);
        x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
        let mut z = x;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        x = z ^ (z >> 31);
    }
    x
}

/// IQ generator plus a classifier trained on it.
#[derive(Debug, Clone)]
pub struct Readout {
    pub model: ReadoutModel,
    pub classifier: GmmClassifier,
    params: DeviceParams,
}

impl Readout {
    /// Trains on `training_shots` prepared shots cycling through `|00⟩, |01⟩, |10⟩`.
    pub fn calibrate(params: &DeviceParams, model: ReadoutModel, training_shots: usize, seed: u64) -> Result<Self> {
        model.validate()?;
        let mut points = Vec::with_capacity(training_shots);
        let mut labels = Vec::with_capacity(training_shots);
        for i in 0..training_shots {
            let level = DimonLevel::READOUT[i % 3];
            let mut rng = shot_rng(seed, i as u64);
            points.push(generate_iq(level, &model, readout_t1_us(params, level), &mut rng));
            labels.push(level);
        }
        let classifier = fit_gmm(&points, &labels)?;
        Ok(Self {
            model,
            classifier,
            params: params.clone(),
        })
    }

    pub fn with_classifier(params: &DeviceParams, model: ReadoutModel, classifier: GmmClassifier) -> Result<Self> {
        model.validate()?;
        classifier.validate()?;
        Ok(Self {
            model,
            classifier,
            params: params.clone(),
        })
    }

    pub fn measure<R: rand::Rng + ?Sized>(&self, level: DimonLevel, rng: &mut R) -> (Iq, DimonLevel) {
        let iq = generate_iq(level, &self.model, readout_t1_us(&self.params, level), rng);
        (iq, self.classifier.assign(&iq))
    }
}

/// One experiment swept over delays.
#[derive(Debug, Clone, PartialEq)]
pub struct Sweep {
    pub kind: ExperimentKind,
    pub delays_us: Vec<f64>,
    pub shots: u64,
    pub detuning_hz: f64,
}

impl Sweep {
    pub fn validate(&self) -> Result<()> {
        if self.delays_us.is_empty() {
            return Err(Error::invalid("delay grid is empty"));
        }
        if self.delays_us.iter().any(|d| !(d.is_finite() && *d >= 0.0)) {
            return Err(Error::invalid("delays must be finite and >= 0"));
        }
        if self.delays_us.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("delays must be strictly ascending"));
        }
        if self.shots == 0 {
            return Err(Error::invalid("shots must be >= 1"));
        }
        if !self.detuning_hz.is_finite() {
            return Err(Error::invalid("detuning must be finite"));
        }
        Ok(())
    }
}

/// Prepared states of an experiment as `(label, level)` pairs.
///
/// Superposition experiments carry a tag label; the level is their home pole.
pub fn preparations(kind: ExperimentKind) -> Vec<(String, DimonLevel)> {
    match kind {
        ExperimentKind::Bitflip => vec![
            (DimonLevel::LOGICAL_ZERO.label().into(), DimonLevel::LOGICAL_ZERO),
            (DimonLevel::LOGICAL_ONE.label().into(), DimonLevel::LOGICAL_ONE),
        ],
        ExperimentKind::PhysicalT1(m) => vec![(m.excited_level().label().into(), m.excited_level())],
        ExperimentKind::HahnEcho | ExperimentKind::Ramsey => vec![("+L".into(), DimonLevel::LOGICAL_ZERO)],
        ExperimentKind::PhysicalEcho(m) | ExperimentKind::PhysicalRamsey(m) => {
            vec![(format!("+{m}"), DimonLevel::G00)]
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AcquiredShot {
    pub record: ShotRecord,
    pub delay_us: f64,
    pub outcome: TrajectoryOutcome,
}

fn point_seeds(seed: u64, prep: usize, delay: usize) -> (u64, u64) {
    (
        derive_seed(seed, &[prep as u64, delay as u64, 0]),
        derive_seed(seed, &[prep as u64, delay as u64, 1]),
    )
}

fn shot_at(
    engine: &TrajectoryEngine,
    readout: &Readout,
    seq: &PulseSequence,
    seeds: (u64, u64),
    k: u64,
) -> (TrajectoryOutcome, Iq, DimonLevel) {
    let outcome = engine.run_shot(seq, seeds.0, k);
    let mut rng = shot_rng(seeds.1, k);
    let (iq, assigned) = readout.measure(outcome.final_level, &mut rng);
    (outcome, iq, assigned)
}

/// Assignment counts per prepared state and delay.
pub fn acquire(
    engine: &TrajectoryEngine,
    readout: &Readout,
    sweep: &Sweep,
    seed: u64,
    timestamp_s: f64,
) -> Result<Vec<TraceData>> {
    sweep.validate()?;
    let mut traces = Vec::new();
    for (pi, (label, init)) in preparations(sweep.kind).into_iter().enumerate() {
        let mut points = Vec::with_capacity(sweep.delays_us.len());
        for (di, &delay) in sweep.delays_us.iter().enumerate() {
            let seq = PulseSequence::for_experiment(sweep.kind, delay, init, sweep.detuning_hz)?;
            let seeds = point_seeds(seed, pi, di);
            let counts = (0..sweep.shots)
                .into_par_iter()
                .map(|k| {
                    let mut c = [0u64; 3];
                    c[shot_at(engine, readout, &seq, seeds, k).2.index()] += 1;
                    c
                })
                .reduce(|| [0; 3], |a, b| [a[0] + b[0], a[1] + b[1], a[2] + b[2]]);
            points.push(TracePoint {
                delay_us: delay,
                n00: counts[DimonLevel::G00.index()],
                n01: counts[DimonLevel::L01.index()],
                n10: counts[DimonLevel::L10.index()],
                n_total: sweep.shots,
            });
        }
        traces.push(TraceData {
            kind: sweep.kind,
            init_label: label,
            timestamp_s,
            points,
        });
    }
    Ok(traces)
}

/// Every shot of a sweep, ordered by preparation, delay, then shot.
///
/// Uses the same streams as [`acquire`], so counting the assigned labels
/// reproduces its traces.
pub fn acquire_shots(
    engine: &TrajectoryEngine,
    readout: &Readout,
    sweep: &Sweep,
    seed: u64,
) -> Result<Vec<AcquiredShot>> {
    sweep.validate()?;
    let mut out = Vec::new();
    for (pi, (label, init)) in preparations(sweep.kind).into_iter().enumerate() {
        for (di, &delay) in sweep.delays_us.iter().enumerate() {
            let seq = PulseSequence::for_experiment(sweep.kind, delay, init, sweep.detuning_hz)?;
            let seeds = point_seeds(seed, pi, di);
            let base = out.len() as u64;
            let shots: Vec<AcquiredShot> = (0..sweep.shots)
                .into_par_iter()
                .map(|k| {
                    let (outcome, iq, assigned) = shot_at(engine, readout, &seq, seeds, k);
                    AcquiredShot {
                        record: ShotRecord {
                            shot_index: base + k,
                            prep_label: label.clone(),
                            i: iq[0],
                            q: iq[1],
                            assigned_label: Some(assigned),
                        },
                        delay_us: delay,
                        outcome,
                    }
                })
                .collect();
            out.extend(shots);
        }
    }
    Ok(out)
}

/// A coherence metric reported per trace.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Metric {
    T1L,
    T2EL,
    T2RL,
    DeltaF,
    GammaErasure,
    T1(Mode),
    T2E(Mode),
    T2R(Mode),
    ModeDeltaF(Mode),
}

impl Metric {
    pub fn name(self) -> String {
        match self {
            Metric::T1L => "T1L".into(),
            Metric::T2EL => "T2EL".into(),
            Metric::T2RL => "T2RL".into(),
            Metric::DeltaF => "delta_f".into(),
            Metric::GammaErasure => "gamma_erasure".into(),
            Metric::T1(m) => format!("T1_{m}"),
            Metric::T2E(m) => format!("T2E_{m}"),
            Metric::T2R(m) => format!("T2R_{m}"),
            Metric::ModeDeltaF(m) => format!("delta_f_{m}"),
        }
    }

    /// Unit of the stored estimate.
    pub fn unit(self) -> &'static str {
        match self {
            Metric::DeltaF | Metric::ModeDeltaF(_) => "Hz",
            Metric::GammaErasure => "1/us",
            _ => "us",
        }
    }

    pub fn is_lifetime(self) -> bool {
        self.unit() == "us"
    }

    pub fn is_logical(self) -> bool {
        matches!(
            self,
            Metric::T1L | Metric::T2EL | Metric::T2RL | Metric::DeltaF | Metric::GammaErasure
        )
    }

    /// Metrics produced by one experiment kind.
    pub fn produced_by(kind: ExperimentKind) -> Vec<Metric> {
        match kind {
            ExperimentKind::Bitflip => vec![Metric::T1L, Metric::GammaErasure],
            ExperimentKind::HahnEcho => vec![Metric::T2EL],
            ExperimentKind::Ramsey => vec![Metric::T2RL, Metric::DeltaF],
            ExperimentKind::PhysicalT1(m) => vec![Metric::T1(m)],
            ExperimentKind::PhysicalEcho(m) => vec![Metric::T2E(m)],
            ExperimentKind::PhysicalRamsey(m) => vec![Metric::T2R(m), Metric::ModeDeltaF(m)],
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mode = |t: &str| t.parse::<Mode>();
        Ok(match s.trim() {
            "T1L" => Metric::T1L,
            "T2EL" => Metric::T2EL,
            "T2RL" => Metric::T2RL,
            "delta_f" => Metric::DeltaF,
            "gamma_erasure" => Metric::GammaErasure,
            other => {
                let (head, tail) = other
                    .rsplit_once('_')
                    .ok_or_else(|| Error::invalid(format!("unknown metric '{other}'")))?;
                let m = mode(tail)?;
                match head {
                    "T1" => Metric::T1(m),
                    "T2E" => Metric::T2E(m),
                    "T2R" => Metric::T2R(m),
                    "delta_f" => Metric::ModeDeltaF(m),
                    _ => return Err(Error::invalid(format!("unknown metric '{other}'"))),
                }
            }
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricOptions {
    pub cutoff_us: f64,
    pub bootstrap_resamples: usize,
    pub quantile: f64,
    pub seed: u64,
}

impl Default for MetricOptions {
    fn default() -> Self {
        Self {
            cutoff_us: DEFAULT_LINEAR_CUTOFF_US,
            bootstrap_resamples: DEFAULT_RESAMPLES,
            quantile: DEFAULT_QUANTILE,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct MetricEstimate {
    pub metric: Metric,
    /// Lifetimes are `inf` when no decay is resolvable; `NaN` marks a failed fit.
    pub estimate: f64,
    pub lower: Option<f64>,
    pub upper: Option<f64>,
    pub resolvable: bool,
    pub fit: Option<FitResult>,
    pub error: Option<String>,
    /// Solver state when the fit failed to converge.
    pub diagnostics: Option<FitDiagnostics>,
}

impl MetricEstimate {
    fn gap(metric: Metric, err: &Error) -> Self {
        Self {
            metric,
            estimate: f64::NAN,
            lower: None,
            upper: None,
            resolvable: false,
            fit: None,
            error: Some(err.to_string()),
            diagnostics: match err {
                Error::NonConvergence(d) => Some(d.clone()),
                _ => None,
            },
        }
    }
}

fn require(sig: Signal, min: usize) -> Result<Signal> {
    if sig.len() < min {
        return Err(Error::InsufficientData(format!(
            "{} usable delays, {} flagged",
            sig.len(),
            sig.flagged_us.len()
        )));
    }
    Ok(sig)
}

fn ground_fraction(trace: &TraceData, contrast: bool) -> Signal {
    let mut s = level_fraction_signal(trace, DimonLevel::G00);
    if contrast {
        s.values.iter_mut().for_each(|v| *v = 2.0 * *v - 1.0);
    }
    s
}

fn trace_of(traces: &[TraceData]) -> Result<&TraceData> {
    traces.first().ok_or_else(|| Error::InsufficientData("no traces".into()))
}

fn fit_for(metric: Metric, traces: &[TraceData], opts: &MetricOptions) -> Result<FitResult> {
    match metric {
        Metric::T1L => {
            let s = require(bitflip_difference(traces)?, 2)?;
            fit_linear_short(&s.delays_us, &s.values, opts.cutoff_us)
        }
        Metric::GammaErasure => {
            let s = require(erasure_signal(traces)?, 4)?;
            fit_erasure(&s.delays_us, &s.values)
        }
        Metric::T2EL => {
            let s = require(echo_contrast_signal(trace_of(traces)?), 2)?;
            fit_linear_short(&s.delays_us, &s.values, opts.cutoff_us)
        }
        Metric::T2RL | Metric::DeltaF => {
            let s = require(logical_zero_signal(trace_of(traces)?), 5)?;
            fit_ramsey(&s.delays_us, &s.values)
        }
        Metric::T1(m) => {
            let s = require(level_fraction_signal(trace_of(traces)?, m.excited_level()), 3)?;
            fit_exp_decay(&s.delays_us, &s.values)
        }
        Metric::T2E(_) => {
            let s = require(ground_fraction(trace_of(traces)?, true), 3)?;
            fit_exp_decay(&s.delays_us, &s.values)
        }
        Metric::T2R(_) | Metric::ModeDeltaF(_) => {
            let s = require(ground_fraction(trace_of(traces)?, false), 5)?;
            fit_ramsey(&s.delays_us, &s.values)
        }
    }
}

fn estimate_from(metric: Metric, fit: FitResult) -> MetricEstimate {
    let (name, resolvable) = match metric {
        Metric::DeltaF | Metric::ModeDeltaF(_) => ("detuning_hz", true),
        Metric::GammaErasure => ("gamma", fit.decay_resolved()),
        _ => ("lifetime", fit.decay_resolved()),
    };
    let p = fit.param(name).cloned().expect("fit carries the requested parameter");
    let (estimate, lower, upper) = if metric.is_lifetime() && !resolvable {
        (f64::INFINITY, p.lower, p.lower.map(|_| f64::INFINITY))
    } else {
        (p.value, p.lower, p.upper)
    };
    MetricEstimate {
        metric,
        estimate,
        lower,
        upper,
        resolvable,
        fit: Some(fit),
        error: None,
        diagnostics: None,
    }
}

/// Fits every metric an experiment produces. Failures become gaps, never errors.
pub fn extract_metrics(kind: ExperimentKind, traces: &[TraceData], opts: &MetricOptions) -> Vec<MetricEstimate> {
    let mut out = Vec::new();
    let mut shared: Option<Result<FitResult>> = None;
    for (i, metric) in Metric::produced_by(kind).into_iter().enumerate() {
        // Ramsey metrics share one fit
        let reuse = matches!(metric, Metric::DeltaF | Metric::ModeDeltaF(_));
        let fit = match (reuse, shared.take()) {
            (true, Some(prev)) => prev,
            _ => fit_for(metric, traces, opts).and_then(|mut f| {
                if opts.bootstrap_resamples > 0 {
                    let seed = derive_seed(opts.seed, &[i as u64]);
                    if let Err(e) = attach_bounds(&mut f, opts.bootstrap_resamples, opts.quantile, seed) {
                        log::warn!("{metric}: bootstrap skipped: {e}");
                        f.warnings.push(format!("bootstrap skipped: {e}"));
                    }
                }
                Ok(f)
            }),
        };
        shared = Some(match &fit {
            Ok(f) => Ok(f.clone()),
            Err(Error::InsufficientData(m)) => Err(Error::InsufficientData(m.clone())),
            Err(e) => Err(Error::InsufficientData(e.to_string())),
        });
        out.push(match fit {
            Ok(f) => estimate_from(metric, f),
            Err(e) => MetricEstimate::gap(metric, &e),
        });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::device::DeviceConfig;
    use crate::dynamics::RateMatrix;

    fn q1() -> DeviceParams {
        DeviceConfig::preset("q1").unwrap().to_params().unwrap()
    }

    fn readout(p: &DeviceParams) -> Readout {
        Readout::calibrate(p, ReadoutModel::default(), 3000, 5).unwrap()
    }

    #[test]
    fn derived_seeds_differ() {
        let a = derive_seed(1, &[0, 0]);
        assert_ne!(a, derive_seed(1, &[0, 1]));
        assert_ne!(a, derive_seed(1, &[1, 0]));
        assert_ne!(a, derive_seed(2, &[0, 0]));
        assert_eq!(a, derive_seed(1, &[0, 0]));
    }

    #[test]
    fn shots_reproduce_trace_counts() {
        let p = q1();
        let engine = TrajectoryEngine::new(&p, &[]).unwrap();
        let ro = readout(&p);
        let sweep = Sweep {
            kind: ExperimentKind::Bitflip,
            delays_us: vec![0.0, 20.0, 40.0],
            shots: 300,
            detuning_hz: 0.0,
        };
        let traces = acquire(&engine, &ro, &sweep, 11, 0.0).unwrap();
        let shots = acquire_shots(&engine, &ro, &sweep, 11).unwrap();
        assert_eq!(shots.len(), 2 * 3 * 300);
        for (ti, t) in traces.iter().enumerate() {
            for (di, pt) in t.points.iter().enumerate() {
                let block = &shots[(ti * 3 + di) * 300..(ti * 3 + di + 1) * 300];
                let n00 = block
                    .iter()
                    .filter(|s| s.record.assigned_label == Some(DimonLevel::G00))
                    .count() as u64;
                assert_eq!(n00, pt.n00);
                assert!(block.iter().all(|s| s.record.prep_label == t.init_label));
            }
        }
        assert!(shots.iter().enumerate().all(|(i, s)| s.record.shot_index == i as u64));
    }

    #[test]
    fn rate_free_noiseless_metrics_are_unresolved() {
        let mut p = q1();
        p.t1_d_us = f64::INFINITY;
        p.t1_q_us = f64::INFINITY;
        let engine = TrajectoryEngine::from_rates(RateMatrix::from_rates(&[]).unwrap(), &[]).unwrap();
        let ro = readout(&p);
        for kind in [ExperimentKind::Bitflip, ExperimentKind::HahnEcho] {
            let sweep = Sweep {
                kind,
                delays_us: (0..8).map(|i| i as f64 * 5.0).collect(),
                shots: 500,
                detuning_hz: 75e3,
            };
            let traces = acquire(&engine, &ro, &sweep, 3, 0.0).unwrap();
            let m = extract_metrics(kind, &traces, &MetricOptions::default());
            let life = m.iter().find(|e| e.metric.is_lifetime()).unwrap();
            assert!(!life.resolvable);
            assert_eq!(life.estimate, f64::INFINITY);
        }
    }

    #[test]
    fn metric_names_round_trip() {
        for m in [
            Metric::T1L,
            Metric::T2EL,
            Metric::T2RL,
            Metric::DeltaF,
            Metric::GammaErasure,
            Metric::T1(Mode::D),
            Metric::T2E(Mode::Q),
            Metric::T2R(Mode::D),
            Metric::ModeDeltaF(Mode::Q),
        ] {
            assert_eq!(m.name().parse::<Metric>().unwrap(), m);
        }
    }

    #[test]
    fn physical_t1_recovers_lifetime() {
        let p = q1();
        let engine = TrajectoryEngine::new(&p, &[]).unwrap();
        let ro = readout(&p);
        let sweep = Sweep {
            kind: ExperimentKind::PhysicalT1(Mode::Q),
            delays_us: (0..15).map(|i| i as f64 * 20.0).collect(),
            shots: 2000,
            detuning_hz: 0.0,
        };
        let traces = acquire(&engine, &ro, &sweep, 8, 0.0).unwrap();
        let opts = MetricOptions {
            bootstrap_resamples: 0,
            ..MetricOptions::default()
        };
        let m = extract_metrics(sweep.kind, &traces, &opts);
        assert!((m[0].estimate / p.t1_q_us - 1.0).abs() < 0.1, "{}", m[0].estimate);
    }
}
