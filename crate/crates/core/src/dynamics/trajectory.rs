//! Per-shot trajectories: jump-sampled populations plus a stochastic frame phase.
//!
//! A coherent state is a pair `(a, b)` with weights and a relative phase.
//! Jumps are drawn from a hidden branch level picked with the weights, which
//! reproduces the jump statistics of the pure-state unravelling; without a
//! jump the weights decay at their exit rates and are renormalised.

use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::noise::{cycles_to_phase, ModeOffsets, NoiseProcess, ShotNoise, ShotNoisePlan};
use super::rates::{build_rate_matrix, RateMatrix};
use super::sequence::{Preparation, PulseSequence, SequenceElement};
use crate::device::{DeviceParams, DimonLevel};
use crate::error::{Error, Result};

/// Grid resolution for per-shot 1/f paths.
pub const DEFAULT_NOISE_GRID: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryOutcome {
    pub final_level: DimonLevel,
    /// Accumulated frame phase (rad); for logical sequences 2π∫(δf_Q − δf_D).
    pub phase_rad: f64,
    pub erased: bool,
}

/// Per-shot random stream: seeded by `seed`, stream index `shot_index`.
pub fn shot_rng(seed: u64, shot_index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(shot_index);
    rng
}

#[derive(Debug, Clone, Copy)]
enum State {
    Level(DimonLevel),
    Coherent { wa: f64, wb: f64, on_a: bool },
}

pub struct TrajectoryEngine {
    rates: RateMatrix,
    exit: [f64; 6],
    /// Cumulative jump distribution per source level.
    jumps: Vec<Vec<(DimonLevel, f64)>>,
    noise: ShotNoisePlan,
    offsets: ModeOffsets,
}

impl TrajectoryEngine {
    pub fn new(params: &DeviceParams, noise: &[NoiseProcess]) -> Result<Self> {
        params.validate()?;
        Self::from_rates(build_rate_matrix(params), noise)
    }

    pub fn from_rates(rates: RateMatrix, noise: &[NoiseProcess]) -> Result<Self> {
        for p in noise {
            p.validate()?;
        }
        let mut exit = [0.0; 6];
        let mut jumps = Vec::with_capacity(6);
        for from in DimonLevel::ALL {
            let total = rates.exit_rate(from);
            exit[from.index()] = total;
            let mut acc = 0.0;
            let mut table = Vec::new();
            for to in DimonLevel::ALL {
                let r = rates.rate(from, to);
                if r > 0.0 {
                    acc += r / total;
                    table.push((to, acc));
                }
            }
            jumps.push(table);
        }
        Ok(Self {
            rates,
            exit,
            jumps,
            noise: ShotNoisePlan::new(noise, DEFAULT_NOISE_GRID),
            offsets: ModeOffsets::default(),
        })
    }

    /// Constant mode-frequency offsets applied to every shot (slow campaign noise).
    pub fn with_offsets(mut self, offsets: ModeOffsets) -> Self {
        self.offsets = offsets;
        self
    }

    pub fn set_offsets(&mut self, offsets: ModeOffsets) {
        self.offsets = offsets;
    }

    pub fn rates(&self) -> &RateMatrix {
        &self.rates
    }

    pub fn run_shot(&self, seq: &PulseSequence, seed: u64, shot_index: u64) -> TrajectoryOutcome {
        let mut rng = shot_rng(seed, shot_index);
        let mut noise = if self.noise.is_empty() {
            ShotNoise::offsets_only(self.offsets)
        } else {
            self.noise.realise(seq.total_delay_us(), self.offsets, &mut rng)
        };
        let frame = seq.frame();
        let (a, b) = frame.pair();
        let (cd, cq) = frame.phase_weights();
        // +1 when the coherent pair is held with the frame's first level as home
        let mut orient = 1.0;
        let mut phase = 0.0;
        let mut state = State::Level(a);

        for el in seq.elements() {
            match *el {
                SequenceElement::Prepare(Preparation::Level(l)) => state = State::Level(l),
                SequenceElement::Prepare(Preparation::Superposition(home)) => {
                    orient = if home == a { 1.0 } else { -1.0 };
                    state = State::Coherent {
                        wa: 0.5,
                        wb: 0.5,
                        on_a: rng.random::<f64>() < 0.5,
                    };
                }
                SequenceElement::Delay(t) => {
                    let (d, q) = noise.advance(t, &mut rng);
                    phase += cycles_to_phase(cd * d + cq * q);
                    state = self.evolve(state, (a, b), t, &mut rng);
                }
                SequenceElement::Pi => {
                    phase = -phase;
                    state = match state {
                        State::Level(l) if l == a => State::Level(b),
                        State::Level(l) if l == b => State::Level(a),
                        State::Level(l) => State::Level(l),
                        State::Coherent { wa, wb, on_a } => State::Coherent {
                            wa: wb,
                            wb: wa,
                            on_a: !on_a,
                        },
                    };
                }
                SequenceElement::Project(phi) => {
                    state = match state {
                        State::Coherent { wa, wb, .. } => {
                            // phase of the partner relative to the home level
                            let theta = orient * phase;
                            let p_home = 0.5 + (wa * wb).sqrt() * (theta - phi).cos();
                            let p_a = if orient > 0.0 { p_home } else { 1.0 - p_home };
                            State::Level(if rng.random::<f64>() < p_a { a } else { b })
                        }
                        State::Level(l) if l == a || l == b => {
                            State::Level(if rng.random::<f64>() < 0.5 { a } else { b })
                        }
                        s => s,
                    };
                }
                SequenceElement::Measure => {
                    if let State::Coherent { on_a, .. } = state {
                        state = State::Level(if on_a { a } else { b });
                    }
                }
            }
        }
        let final_level = match state {
            State::Level(l) => l,
            State::Coherent { on_a, .. } => {
                if on_a {
                    a
                } else {
                    b
                }
            }
        };
        TrajectoryOutcome {
            final_level,
            phase_rad: phase,
            erased: final_level == DimonLevel::G00,
        }
    }

    fn evolve<R: Rng + ?Sized>(&self, state: State, (a, b): (DimonLevel, DimonLevel), t: f64, rng: &mut R) -> State {
        match state {
            State::Level(l) => State::Level(self.jump_walk(l, t, rng)),
            State::Coherent { wa, wb, on_a } => {
                let branch = if on_a { a } else { b };
                let rate = self.exit[branch.index()];
                if rate > 0.0 {
                    let tau = Exp::new(rate).expect("rate > 0").sample(rng);
                    if tau < t {
                        let next = self.jump_target(branch, rng);
                        return State::Level(self.jump_walk(next, t - tau, rng));
                    }
                }
                let wa = wa * (-self.exit[a.index()] * t).exp();
                let wb = wb * (-self.exit[b.index()] * t).exp();
                let norm = wa + wb;
                State::Coherent {
                    wa: wa / norm,
                    wb: wb / norm,
                    on_a,
                }
            }
        }
    }

    fn jump_walk<R: Rng + ?Sized>(&self, mut level: DimonLevel, mut remaining: f64, rng: &mut R) -> DimonLevel {
        loop {
            let rate = self.exit[level.index()];
            if rate <= 0.0 {
                return level;
            }
            let tau = Exp::new(rate).expect("rate > 0").sample(rng);
            if tau >= remaining {
                return level;
            }
            remaining -= tau;
            level = self.jump_target(level, rng);
        }
    }

    fn jump_target<R: Rng + ?Sized>(&self, from: DimonLevel, rng: &mut R) -> DimonLevel {
        let u: f64 = rng.random();
        let table = &self.jumps[from.index()];
        table
            .iter()
            .find(|(_, c)| u < *c)
            .or(table.last())
            .map(|(l, _)| *l)
            .expect("non-empty jump table for a decaying level")
    }

    /// Shots `first..first + n` in parallel; results are in shot order.
    pub fn run_shots(&self, seq: &PulseSequence, seed: u64, first: u64, n: u64) -> Vec<TrajectoryOutcome> {
        (first..first + n)
            .into_par_iter()
            .map(|i| self.run_shot(seq, seed, i))
            .collect()
    }

    /// Final-level histogram over shots `first..first + n`.
    pub fn level_counts(&self, seq: &PulseSequence, seed: u64, first: u64, n: u64) -> [u64; 6] {
        (first..first + n)
            .into_par_iter()
            .fold(
                || [0u64; 6],
                |mut acc, i| {
                    acc[self.run_shot(seq, seed, i).final_level.index()] += 1;
                    acc
                },
            )
            .reduce(
                || [0u64; 6],
                |mut x, y| {
                    for k in 0..6 {
                        x[k] += y[k];
                    }
                    x
                },
            )
    }
}

/// One-shot convenience wrapper; builds the engine every call.
pub fn sample_trajectory(
    params: &DeviceParams,
    seq: &PulseSequence,
    noise: &[NoiseProcess],
    seed: u64,
    shot_index: u64,
) -> Result<TrajectoryOutcome> {
    Ok(TrajectoryEngine::new(params, noise)?.run_shot(seq, seed, shot_index))
}

/// Writes `shot_index,final_level,phase_rad,erased` for consecutive shots.
pub fn write_trajectory_csv(path: &Path, first_shot: u64, outcomes: &[TrajectoryOutcome]) -> Result<()> {
    write_indexed_trajectory_csv(path, outcomes.iter().enumerate().map(|(k, o)| (first_shot + k as u64, o)))
}

/// Same format with explicit shot indices.
pub fn write_indexed_trajectory_csv<'a>(
    path: &Path,
    rows: impl IntoIterator<Item = (u64, &'a TrajectoryOutcome)>,
) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    let mut body = String::from("shot_index,final_level,phase_rad,erased\n");
    for (k, o) in rows {
        body.push_str(&format!("{},{},{:e},{}\n", k, o.final_level, o.phase_rad, o.erased));
    }
    w.write_all(body.as_bytes()).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::device::{DeviceConfig, Mode};
    use crate::dynamics::noise::Coupling;
    use crate::dynamics::rates::{populations_of, propagate_exact};

    fn q1() -> DeviceParams {
        DeviceConfig::preset("q1").unwrap().to_params().unwrap()
    }

    fn rate_free() -> DeviceParams {
        let mut p = q1();
        p.t1_d_us = f64::INFINITY;
        p.t1_q_us = f64::INFINITY;
        p
    }

    #[test]
    fn noiseless_ramsey_returns_home() {
        let e = TrajectoryEngine::new(&rate_free(), &[]).unwrap();
        let seq = PulseSequence::ramsey(0.0, 0.0).unwrap();
        for i in 0..200 {
            assert_eq!(e.run_shot(&seq, 1, i).final_level, DimonLevel::L10);
        }
        let home_one = PulseSequence::new(
            seq.kind(),
            vec![
                SequenceElement::Prepare(Preparation::Superposition(DimonLevel::L01)),
                SequenceElement::Delay(3.0),
                SequenceElement::Project(0.0),
                SequenceElement::Measure,
            ],
        )
        .unwrap();
        for i in 0..200 {
            assert_eq!(e.run_shot(&home_one, 1, i).final_level, DimonLevel::L01);
        }
    }

    #[test]
    fn projection_at_quarter_turn_is_even() {
        let e = TrajectoryEngine::new(&rate_free(), &[]).unwrap();
        let seq = PulseSequence::ramsey(1.0, 250e3).unwrap(); // phase π/2
        let c = e.level_counts(&seq, 9, 0, 20000);
        let p = c[DimonLevel::L10.index()] as f64 / 20000.0;
        assert!((p - 0.5).abs() < 0.015);
    }

    #[test]
    fn deterministic_and_batch_independent() {
        let noise = [NoiseProcess::white(1e3, Coupling::DifferentialD)];
        let e = TrajectoryEngine::new(&q1(), &noise).unwrap();
        let seq = PulseSequence::ramsey(20.0, 75e3).unwrap();
        let all = e.run_shots(&seq, 42, 0, 100);
        let tail = e.run_shots(&seq, 42, 50, 50);
        assert_eq!(&all[50..], &tail[..]);
        assert_eq!(all[7], e.run_shot(&seq, 42, 7));
    }

    #[test]
    fn common_noise_leaves_logical_phase_zero() {
        let noise = [
            NoiseProcess::white(5e5, Coupling::common()),
            NoiseProcess::one_over_f(1e6, Coupling::Common { w_d: 0.3, w_q: 0.3 }),
            NoiseProcess::telegraph(1e5, 1e4, Coupling::common()),
        ];
        let e = TrajectoryEngine::new(&q1(), &noise).unwrap();
        let seq = PulseSequence::ramsey(40.0, 75e3).unwrap();
        for o in e.run_shots(&seq, 3, 0, 500) {
            assert_eq!(o.phase_rad, 0.0);
        }
    }

    #[test]
    fn echo_cancels_quasistatic_noise() {
        let noise = [
            NoiseProcess::one_over_f(1e6, Coupling::DifferentialQ).quasistatic(),
            NoiseProcess::telegraph(2e5, 1e3, Coupling::DifferentialD).quasistatic(),
        ];
        let e = TrajectoryEngine::new(&q1(), &noise).unwrap();
        let seq = PulseSequence::hahn_echo(30.0).unwrap();
        for o in e.run_shots(&seq, 5, 0, 500) {
            assert_eq!(o.phase_rad, 0.0);
        }
    }

    #[test]
    fn physical_frame_phase_follows_one_mode() {
        let noise = [NoiseProcess::telegraph(1e5, 1e-3, Coupling::DifferentialD).quasistatic()];
        let e = TrajectoryEngine::new(&rate_free(), &noise).unwrap();
        let on_q = PulseSequence::physical_ramsey(Mode::Q, 10.0, 0.0).unwrap();
        let on_d = PulseSequence::physical_ramsey(Mode::D, 10.0, 0.0).unwrap();
        assert_eq!(e.run_shot(&on_q, 1, 0).phase_rad, 0.0);
        let phi = e.run_shot(&on_d, 1, 0).phase_rad.abs();
        assert!((phi - 2.0 * std::f64::consts::PI * 5e4 * 10e-6).abs() < 1e-12);
    }

    #[test]
    fn bitflip_populations_match_oracle() {
        let params = q1().with_n_th(0.02);
        let e = TrajectoryEngine::new(&params, &[]).unwrap();
        let n = 50_000u64;
        for t in [5.0, 60.0, 200.0] {
            let seq = PulseSequence::bitflip(DimonLevel::L01, t).unwrap();
            let counts = e.level_counts(&seq, 17, 0, n);
            let exact = propagate_exact(e.rates(), &populations_of(DimonLevel::L01), t).unwrap();
            let tv: f64 = counts
                .iter()
                .zip(exact.iter())
                .map(|(&c, &p)| (c as f64 / n as f64 - p).abs())
                .sum::<f64>()
                / 2.0;
            assert!(tv < 0.01, "t={t} tv={tv}");
        }
    }

    #[test]
    fn superposition_erases_at_mean_rate() {
        // branch sampling: P(00) after t equals the average of the two single-level decays
        let params = q1().with_n_th(0.0);
        let e = TrajectoryEngine::new(&params, &[]).unwrap();
        let t = 50.0;
        let seq = PulseSequence::ramsey(t, 0.0).unwrap();
        let n = 40_000u64;
        let c = e.level_counts(&seq, 2, 0, n);
        let p00 = c[0] as f64 / n as f64;
        let expect = 1.0 - 0.5 * ((-t / params.t1_d_us).exp() + (-t / params.t1_q_us).exp());
        assert!((p00 - expect).abs() < 4.0 * (expect * (1.0 - expect) / n as f64).sqrt());
    }

    #[test]
    fn trajectory_csv_layout() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("traj.csv");
        let e = TrajectoryEngine::new(&q1(), &[]).unwrap();
        let seq = PulseSequence::bitflip(DimonLevel::L10, 1.0).unwrap();
        write_trajectory_csv(&path, 10, &e.run_shots(&seq, 1, 10, 3)).unwrap();
        let text = std::fs::read_to_string(path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "shot_index,final_level,phase_rad,erased");
        assert_eq!(lines.len(), 4);
        assert!(lines[1].starts_with("10,"));
    }
}
