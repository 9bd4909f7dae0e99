//! Frequency-noise processes acting on the two dimon modes.
//!
//! Amplitudes are in Hz-based units: a white process has one-sided PSD
//! `S_f` (Hz²/Hz), a 1/f process has PSD `A/f` (A in Hz²), a telegraph
//! process jumps between ±excursion/2 at a switching rate in Hz.
//! Time arguments are microseconds, matching the pulse sequences.

use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, StandardNormal};
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::device::Mode;
use crate::error::{Error, Result};

const US: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseKind {
    White { psd_hz2_per_hz: f64 },
    OneOverF { a_hz2: f64 },
    Telegraph { excursion_hz: f64, switching_rate_hz: f64 },
}

/// Which mode frequencies a process moves.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Coupling {
    /// Both modes, scaled by per-mode weights.
    Common { w_d: f64, w_q: f64 },
    DifferentialD,
    DifferentialQ,
}

impl Coupling {
    pub fn common() -> Self {
        Coupling::Common { w_d: 1.0, w_q: 1.0 }
    }

    pub fn differential(mode: Mode) -> Self {
        match mode {
            Mode::D => Coupling::DifferentialD,
            Mode::Q => Coupling::DifferentialQ,
        }
    }

    /// `(w_D, w_Q)`.
    pub fn mode_weights(&self) -> (f64, f64) {
        match *self {
            Coupling::Common { w_d, w_q } => (w_d, w_q),
            Coupling::DifferentialD => (1.0, 0.0),
            Coupling::DifferentialQ => (0.0, 1.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseProcess {
    #[serde(flatten)]
    pub kind: NoiseKind,
    pub coupling: Coupling,
    /// Freeze the process at one value per shot.
    #[serde(default)]
    pub quasistatic: bool,
    /// Evolve on campaign (virtual wall-clock) time instead of per shot.
    #[serde(default)]
    pub persistent: bool,
}

impl NoiseProcess {
    pub fn new(kind: NoiseKind, coupling: Coupling) -> Self {
        Self {
            kind,
            coupling,
            quasistatic: false,
            persistent: false,
        }
    }

    pub fn white(psd: f64, coupling: Coupling) -> Self {
        Self::new(NoiseKind::White { psd_hz2_per_hz: psd }, coupling)
    }

    pub fn one_over_f(a: f64, coupling: Coupling) -> Self {
        Self::new(NoiseKind::OneOverF { a_hz2: a }, coupling)
    }

    pub fn telegraph(excursion_hz: f64, switching_rate_hz: f64, coupling: Coupling) -> Self {
        Self::new(
            NoiseKind::Telegraph {
                excursion_hz,
                switching_rate_hz,
            },
            coupling,
        )
    }

    pub fn quasistatic(mut self) -> Self {
        self.quasistatic = true;
        self
    }

    pub fn persistent(mut self) -> Self {
        self.persistent = true;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |x: f64| x.is_finite() && x >= 0.0;
        match self.kind {
            NoiseKind::White { psd_hz2_per_hz } if !ok(psd_hz2_per_hz) => {
                Err(Error::invalid("white PSD must be >= 0"))
            }
            NoiseKind::OneOverF { a_hz2 } if !ok(a_hz2) => {
                Err(Error::invalid("1/f amplitude must be >= 0"))
            }
            NoiseKind::Telegraph {
                excursion_hz,
                switching_rate_hz,
            } => {
                if !ok(excursion_hz) {
                    Err(Error::invalid("telegraph excursion must be >= 0"))
                } else if !(switching_rate_hz > 0.0 && switching_rate_hz.is_finite()) {
                    Err(Error::invalid("telegraph switching rate must be > 0"))
                } else {
                    Ok(())
                }
            }
            _ => {
                let (wd, wq) = self.coupling.mode_weights();
                if wd.is_finite() && wq.is_finite() {
                    Ok(())
                } else {
                    Err(Error::invalid("coupling weights must be finite"))
                }
            }
        }
    }

    fn is_silent(&self) -> bool {
        match self.kind {
            NoiseKind::White { psd_hz2_per_hz } => psd_hz2_per_hz == 0.0,
            NoiseKind::OneOverF { a_hz2 } => a_hz2 == 0.0,
            NoiseKind::Telegraph { excursion_hz, .. } => excursion_hz == 0.0,
        }
    }
}

/// Samples a frequency-offset path (Hz per sample) of `floor(duration/dt)` points.
///
/// Deterministic in `(process, seed)`. A quasistatic process yields a
/// constant path equal to its first sample.
pub fn synthesize_noise(process: &NoiseProcess, duration_us: f64, dt_us: f64, seed: u64) -> Result<Vec<f64>> {
    if !(dt_us > 0.0 && dt_us.is_finite()) {
        return Err(Error::invalid(format!("dt must be positive, got {dt_us}")));
    }
    if !(duration_us >= dt_us) {
        return Err(Error::invalid("duration must be at least one time step"));
    }
    process.validate()?;
    let n = (duration_us / dt_us + 1e-9).floor() as usize;
    if process.is_silent() {
        return Ok(vec![0.0; n]);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dt = dt_us * US;
    let mut path = match process.kind {
        NoiseKind::White { psd_hz2_per_hz } => {
            let sd = (psd_hz2_per_hz / (2.0 * dt)).sqrt();
            (0..n)
                .map(|_| sd * rng.sample::<f64, _>(StandardNormal))
                .collect()
        }
        NoiseKind::OneOverF { a_hz2 } => {
            let fft = FftPlanner::new().plan_fft_inverse(n);
            spectral_path(|f| a_hz2 / f, n, dt, &fft, &mut rng)
        }
        NoiseKind::Telegraph {
            excursion_hz,
            switching_rate_hz,
        } => {
            let mut tg = Telegraph::start(excursion_hz / 2.0, switching_rate_hz, &mut rng);
            let mut out = Vec::with_capacity(n);
            for _ in 0..n {
                out.push(tg.value);
                tg.integrate(dt, &mut rng);
            }
            out
        }
    };
    if process.quasistatic {
        let v = path[0];
        path.iter_mut().for_each(|x| *x = v);
    }
    Ok(path)
}

/// Gaussian path with one-sided PSD `psd(f)` by frequency-domain shaping.
///
/// The lowest non-zero bin is 1/(n dt); the DC bin is zero.
pub(crate) fn spectral_path<R: Rng + ?Sized>(
    psd: impl Fn(f64) -> f64,
    n: usize,
    dt: f64,
    fft: &Arc<dyn Fft<f64>>,
    rng: &mut R,
) -> Vec<f64> {
    if n < 2 {
        return vec![0.0; n];
    }
    let mut buf = vec![Complex::new(0.0, 0.0); n];
    let df = 1.0 / (n as f64 * dt);
    let half = n / 2;
    for k in 1..=half {
        let amp = (psd(k as f64 * df) * n as f64 / (2.0 * dt)).sqrt();
        if n % 2 == 0 && k == half {
            buf[k] = Complex::new(amp * rng.sample::<f64, _>(StandardNormal), 0.0);
        } else {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            let c = Complex::new(re, im) * (amp * FRAC_1_SQRT_2);
            buf[k] = c;
            buf[n - k] = c.conj();
        }
    }
    fft.process(&mut buf);
    let norm = 1.0 / n as f64;
    buf.iter().map(|c| c.re * norm).collect()
}

/// Variance of a shaped path's marginal: Σ_k S(f_k) Δf.
fn spectral_variance(psd: impl Fn(f64) -> f64, n: usize, dt: f64) -> f64 {
    let df = 1.0 / (n as f64 * dt);
    (1..=n / 2).map(|k| psd(k as f64 * df) * df).sum()
}

/// Symmetric random telegraph signal with exact event-driven switching.
#[derive(Debug, Clone)]
pub(crate) struct Telegraph {
    pub value: f64,
    rate: f64,
    until_switch: f64,
    pub switches: u64,
}

impl Telegraph {
    pub fn start<R: Rng + ?Sized>(half_excursion: f64, rate_hz: f64, rng: &mut R) -> Self {
        let value = if rng.random::<bool>() {
            half_excursion
        } else {
            -half_excursion
        };
        let until_switch = Exp::new(rate_hz).expect("rate > 0").sample(rng);
        Self {
            value,
            rate: rate_hz,
            until_switch,
            switches: 0,
        }
    }

    /// Advances by `dt` seconds and returns ∫ x dt over the interval.
    pub fn integrate<R: Rng + ?Sized>(&mut self, mut dt: f64, rng: &mut R) -> f64 {
        let exp = Exp::new(self.rate).expect("rate > 0");
        let mut acc = 0.0;
        while self.until_switch <= dt {
            acc += self.value * self.until_switch;
            dt -= self.until_switch;
            self.value = -self.value;
            self.switches += 1;
            self.until_switch = exp.sample(rng);
        }
        acc += self.value * dt;
        self.until_switch -= dt;
        acc
    }
}

/// Constant per-mode frequency offsets (Hz) held for a whole trace.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ModeOffsets {
    pub d_hz: f64,
    pub q_hz: f64,
}

enum ProcessState {
    White { sd_per_sqrt_s: f64 },
    Constant(f64),
    Telegraph(Telegraph),
    Grid { cumulative: Vec<f64>, dt: f64, t: f64 },
}

impl ProcessState {
    fn integrate<R: Rng + ?Sized>(&mut self, dt: f64, rng: &mut R) -> f64 {
        match self {
            ProcessState::White { sd_per_sqrt_s } => {
                *sd_per_sqrt_s * dt.sqrt() * rng.sample::<f64, _>(StandardNormal)
            }
            ProcessState::Constant(v) => *v * dt,
            ProcessState::Telegraph(tg) => tg.integrate(dt, rng),
            ProcessState::Grid { cumulative, dt: step, t } => {
                let a = grid_integral(cumulative, *step, *t);
                *t += dt;
                grid_integral(cumulative, *step, *t) - a
            }
        }
    }
}

/// ∫_0^t of a piecewise-constant path given its cumulative cell integrals.
fn grid_integral(cumulative: &[f64], step: f64, t: f64) -> f64 {
    let n = cumulative.len() - 1;
    let pos = t / step;
    let k = (pos.floor() as usize).min(n.saturating_sub(1));
    let frac = (pos - k as f64).min(1.0 + (pos - n as f64).max(0.0));
    let cell = cumulative[k + 1] - cumulative[k];
    cumulative[k] + cell * frac
}

/// Per-shot frequency-noise realisation integrated along the shot clock.
pub(crate) struct ShotNoise {
    items: Vec<(ProcessState, f64, f64)>,
    offsets: ModeOffsets,
}

pub(crate) struct ShotNoisePlan {
    processes: Vec<NoiseProcess>,
    grid_points: usize,
    fft: Option<Arc<dyn Fft<f64>>>,
}

impl ShotNoisePlan {
    /// Keeps only per-shot processes; persistent ones are applied through offsets.
    pub fn new(processes: &[NoiseProcess], grid_points: usize) -> Self {
        let processes: Vec<NoiseProcess> = processes
            .iter()
            .filter(|p| !p.persistent && !p.is_silent())
            .copied()
            .collect();
        let needs_fft = processes
            .iter()
            .any(|p| matches!(p.kind, NoiseKind::OneOverF { .. }) && !p.quasistatic);
        let fft = needs_fft.then(|| FftPlanner::new().plan_fft_inverse(grid_points));
        Self {
            processes,
            grid_points,
            fft,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.processes.is_empty()
    }

    pub fn realise<R: Rng + ?Sized>(&self, duration_us: f64, offsets: ModeOffsets, rng: &mut R) -> ShotNoise {
        let n = self.grid_points;
        let duration = (duration_us * US).max(f64::MIN_POSITIVE);
        let dt = duration / n as f64;
        let items = self
            .processes
            .iter()
            .map(|p| {
                let (wd, wq) = p.coupling.mode_weights();
                let state = match (p.kind, p.quasistatic) {
                    (NoiseKind::White { psd_hz2_per_hz }, false) => ProcessState::White {
                        sd_per_sqrt_s: (psd_hz2_per_hz / 2.0).sqrt(),
                    },
                    (NoiseKind::White { psd_hz2_per_hz }, true) => ProcessState::Constant(
                        (psd_hz2_per_hz / (2.0 * dt)).sqrt() * rng.sample::<f64, _>(StandardNormal),
                    ),
                    (NoiseKind::OneOverF { a_hz2 }, true) => {
                        let var = spectral_variance(|f| a_hz2 / f, n, dt);
                        ProcessState::Constant(var.sqrt() * rng.sample::<f64, _>(StandardNormal))
                    }
                    (NoiseKind::OneOverF { a_hz2 }, false) => {
                        let fft = self.fft.as_ref().expect("planned for 1/f");
                        let path = spectral_path(|f| a_hz2 / f, n, dt, fft, rng);
                        let mut cumulative = Vec::with_capacity(n + 1);
                        cumulative.push(0.0);
                        let mut acc = 0.0;
                        for x in path {
                            acc += x * dt;
                            cumulative.push(acc);
                        }
                        ProcessState::Grid {
                            cumulative,
                            dt,
                            t: 0.0,
                        }
                    }
                    (
                        NoiseKind::Telegraph {
                            excursion_hz,
                            switching_rate_hz,
                        },
                        quasi,
                    ) => {
                        let tg = Telegraph::start(excursion_hz / 2.0, switching_rate_hz, rng);
                        if quasi {
                            ProcessState::Constant(tg.value)
                        } else {
                            ProcessState::Telegraph(tg)
                        }
                    }
                };
                (state, wd, wq)
            })
            .collect();
        ShotNoise { items, offsets }
    }
}

impl ShotNoise {
    pub fn offsets_only(offsets: ModeOffsets) -> Self {
        Self {
            items: Vec::new(),
            offsets,
        }
    }

    /// Accumulated frequency integrals (cycles) of the D and Q modes over the next `dt_us`.
    pub fn advance<R: Rng + ?Sized>(&mut self, dt_us: f64, rng: &mut R) -> (f64, f64) {
        let dt = dt_us * US;
        let mut d = self.offsets.d_hz * dt;
        let mut q = self.offsets.q_hz * dt;
        for (state, wd, wq) in &mut self.items {
            let x = state.integrate(dt, rng);
            d += *wd * x;
            q += *wq * x;
        }
        (d, q)
    }
}

/// Converts integrated cycles to phase (rad).
pub(crate) fn cycles_to_phase(cycles: f64) -> f64 {
    2.0 * PI * cycles
}

#[cfg(test)]
mod tests {
    use super::*;

    fn welch_flat_level(path: &[f64], dt_s: f64) -> f64 {
        // plain averaged periodogram over 1024-sample blocks, no window
        let m = 1024;
        let fft = FftPlanner::new().plan_fft_forward(m);
        let mut acc = vec![0.0; m / 2];
        let blocks = path.len() / m;
        for b in 0..blocks {
            let mut buf: Vec<Complex<f64>> = path[b * m..(b + 1) * m]
                .iter()
                .map(|&x| Complex::new(x, 0.0))
                .collect();
            fft.process(&mut buf);
            for k in 1..m / 2 {
                acc[k] += 2.0 * buf[k].norm_sqr() * dt_s / m as f64;
            }
        }
        acc[1..].iter().sum::<f64>() / ((m / 2 - 1) * blocks) as f64
    }

    #[test]
    fn silent_process_gives_zero_path() {
        for p in [
            NoiseProcess::white(0.0, Coupling::common()),
            NoiseProcess::one_over_f(0.0, Coupling::DifferentialD),
            NoiseProcess::telegraph(0.0, 10.0, Coupling::DifferentialQ),
        ] {
            let path = synthesize_noise(&p, 100.0, 0.1, 3).unwrap();
            assert_eq!(path.len(), 1000);
            assert!(path.iter().all(|&x| x == 0.0));
        }
    }

    #[test]
    fn rejects_bad_steps() {
        let p = NoiseProcess::white(1.0, Coupling::common());
        assert!(synthesize_noise(&p, 10.0, 0.0, 0).is_err());
        assert!(synthesize_noise(&p, 10.0, -1.0, 0).is_err());
        assert!(synthesize_noise(&p, 0.5, 1.0, 0).is_err());
    }

    #[test]
    fn deterministic_in_seed() {
        let p = NoiseProcess::one_over_f(1e4, Coupling::common());
        let a = synthesize_noise(&p, 500.0, 0.5, 11).unwrap();
        let b = synthesize_noise(&p, 500.0, 0.5, 11).unwrap();
        let c = synthesize_noise(&p, 500.0, 0.5, 12).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn white_path_has_flat_psd() {
        let s_f = 2.5e3;
        let dt_us = 0.01;
        let p = NoiseProcess::white(s_f, Coupling::DifferentialD);
        let path = synthesize_noise(&p, 1e6 as f64 * dt_us, dt_us, 5).unwrap();
        assert_eq!(path.len(), 1_000_000);
        let level = welch_flat_level(&path, dt_us * US);
        assert!((level / s_f - 1.0).abs() < 0.15, "level {level}");
    }

    #[test]
    fn one_over_f_path_variance_matches_spectrum() {
        let a = 1e3;
        let n = 4096;
        let dt_us = 1.0;
        let p = NoiseProcess::one_over_f(a, Coupling::common());
        let expected = spectral_variance(|f| a / f, n, dt_us * US);
        let mut acc = 0.0;
        let reps = 200;
        for s in 0..reps {
            let path = synthesize_noise(&p, n as f64 * dt_us, dt_us, s).unwrap();
            acc += path.iter().map(|x| x * x).sum::<f64>() / n as f64;
        }
        let var = acc / reps as f64;
        assert!((var / expected - 1.0).abs() < 0.05, "{var} vs {expected}");
    }

    #[test]
    fn telegraph_switch_count_is_poisson() {
        let rate = 2e3;
        let t = 0.05;
        let seeds = 400;
        let mut total = 0u64;
        for s in 0..seeds {
            let mut rng = ChaCha8Rng::seed_from_u64(s);
            let mut tg = Telegraph::start(1.0, rate, &mut rng);
            // many small steps; switching is event driven so step size is irrelevant
            for _ in 0..1000 {
                tg.integrate(t / 1000.0, &mut rng);
            }
            total += tg.switches;
        }
        let expected = rate * t * seeds as f64;
        assert!((total as f64 - expected).abs() < 3.0 * expected.sqrt(), "{total} vs {expected}");
    }

    #[test]
    fn telegraph_path_toggles_between_two_values() {
        let p = NoiseProcess::telegraph(3e4, 1e4, Coupling::DifferentialD);
        let path = synthesize_noise(&p, 2000.0, 1.0, 8).unwrap();
        assert!(path.iter().all(|&x| (x.abs() - 1.5e4).abs() < 1e-9));
        let sign_changes = path.windows(2).filter(|w| w[0] != w[1]).count() as f64;
        // ν T = 20 switches expected, with dt ν = 0.01 few are merged
        assert!((sign_changes - 20.0).abs() < 3.0 * 20f64.sqrt());
    }

    #[test]
    fn quasistatic_path_is_constant() {
        let p = NoiseProcess::one_over_f(1e5, Coupling::common()).quasistatic();
        let path = synthesize_noise(&p, 100.0, 1.0, 4).unwrap();
        assert!(path.iter().all(|&x| x == path[0]));
    }

    #[test]
    fn grid_integral_is_piecewise_linear() {
        let cumulative = vec![0.0, 1.0, 3.0, 6.0];
        assert_eq!(grid_integral(&cumulative, 2.0, 0.0), 0.0);
        assert_eq!(grid_integral(&cumulative, 2.0, 1.0), 0.5);
        assert_eq!(grid_integral(&cumulative, 2.0, 3.0), 2.0);
        assert_eq!(grid_integral(&cumulative, 2.0, 6.0), 6.0);
    }

    #[test]
    fn shot_white_increment_variance() {
        let s_f = 1e4;
        let plan = ShotNoisePlan::new(&[NoiseProcess::white(s_f, Coupling::DifferentialQ)], 64);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let t_us = 20.0;
        let n = 20000;
        let mut acc = 0.0;
        for _ in 0..n {
            let mut shot = plan.realise(t_us, ModeOffsets::default(), &mut rng);
            let (d, q) = shot.advance(t_us, &mut rng);
            assert_eq!(d, 0.0);
            acc += q * q;
        }
        let expected = s_f / 2.0 * t_us * US;
        assert!((acc / n as f64 / expected - 1.0).abs() < 0.05);
    }

    #[test]
    fn noise_process_json_shape() {
        let p = NoiseProcess::telegraph(3e4, 3.5e-5, Coupling::DifferentialD).persistent();
        let v = serde_json::to_value(p).unwrap();
        assert_eq!(v["kind"], "telegraph");
        assert_eq!(v["coupling"]["type"], "differential_d");
        let back: NoiseProcess = serde_json::from_value(v).unwrap();
        assert_eq!(back, p);
    }
}
