//! Pulse sequences with ideal instantaneous gates.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::device::{DimonLevel, Mode};
use crate::error::{Error, Result};

/// Virtual detuning applied through the projection phase (Hz).
pub const DEFAULT_RAMSEY_DETUNING_HZ: f64 = 75e3;

/// Two-level subspace that gates and projections act on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Frame {
    /// `|10⟩` and `|01⟩`.
    Logical,
    /// `|00⟩` and the singly-excited level of one mode.
    Physical(Mode),
}

impl Frame {
    /// The frame's two levels; the frame phase is that of the second relative to the first.
    pub fn pair(self) -> (DimonLevel, DimonLevel) {
        match self {
            Frame::Logical => (DimonLevel::LOGICAL_ZERO, DimonLevel::LOGICAL_ONE),
            Frame::Physical(m) => (DimonLevel::G00, m.excited_level()),
        }
    }

    pub fn contains(self, level: DimonLevel) -> bool {
        let (a, b) = self.pair();
        level == a || level == b
    }

    /// Frame phase weights on the D and Q mode frequency integrals.
    pub(crate) fn phase_weights(self) -> (f64, f64) {
        match self {
            Frame::Logical => (-1.0, 1.0),
            Frame::Physical(Mode::D) => (1.0, 0.0),
            Frame::Physical(Mode::Q) => (0.0, 1.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Bitflip,
    HahnEcho,
    Ramsey,
    PhysicalT1(Mode),
    PhysicalEcho(Mode),
    PhysicalRamsey(Mode),
}

impl ExperimentKind {
    pub fn frame(self) -> Frame {
        match self {
            ExperimentKind::Bitflip | ExperimentKind::HahnEcho | ExperimentKind::Ramsey => Frame::Logical,
            ExperimentKind::PhysicalT1(m) | ExperimentKind::PhysicalEcho(m) | ExperimentKind::PhysicalRamsey(m) => {
                Frame::Physical(m)
            }
        }
    }

    pub fn is_logical(self) -> bool {
        self.frame() == Frame::Logical
    }

    /// Short name used in file names and metric tables.
    pub fn tag(self) -> String {
        match self {
            ExperimentKind::Bitflip => "bitflip".into(),
            ExperimentKind::HahnEcho => "hahn_echo".into(),
            ExperimentKind::Ramsey => "ramsey".into(),
            ExperimentKind::PhysicalT1(m) => format!("t1_{m}"),
            ExperimentKind::PhysicalEcho(m) => format!("echo_{m}"),
            ExperimentKind::PhysicalRamsey(m) => format!("ramsey_{m}"),
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.tag())
    }
}

impl FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_lowercase().replace('-', "_");
        let mode = |m: &str| match m {
            "d" => Ok(Mode::D),
            "q" => Ok(Mode::Q),
            _ => Err(Error::invalid(format!("unknown mode in experiment '{s}'"))),
        };
        match norm.as_str() {
            "bitflip" | "bit_flip" => Ok(ExperimentKind::Bitflip),
            "hahn_echo" | "echo" => Ok(ExperimentKind::HahnEcho),
            "ramsey" => Ok(ExperimentKind::Ramsey),
            other => {
                if let Some(m) = other.strip_prefix("t1_") {
                    Ok(ExperimentKind::PhysicalT1(mode(m)?))
                } else if let Some(m) = other.strip_prefix("echo_") {
                    Ok(ExperimentKind::PhysicalEcho(mode(m)?))
                } else if let Some(m) = other.strip_prefix("ramsey_") {
                    Ok(ExperimentKind::PhysicalRamsey(mode(m)?))
                } else {
                    Err(Error::invalid(format!("unknown experiment '{s}'")))
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preparation {
    Level(DimonLevel),
    /// Equal superposition of the frame pair; a projection at zero phase returns to this level.
    Superposition(DimonLevel),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SequenceElement {
    Prepare(Preparation),
    Delay(f64),
    /// π rotation within the frame pair (the logical refocusing pulse in the logical frame).
    Pi,
    Project(f64),
    Measure,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PulseSequence {
    kind: ExperimentKind,
    elements: Vec<SequenceElement>,
}

impl PulseSequence {
    pub fn new(kind: ExperimentKind, elements: Vec<SequenceElement>) -> Result<Self> {
        let seq = Self { kind, elements };
        seq.validate()?;
        Ok(seq)
    }

    /// Prepare a level, wait, measure.
    pub fn bitflip(init: DimonLevel, delay_us: f64) -> Result<Self> {
        Self::new(
            ExperimentKind::Bitflip,
            vec![
                SequenceElement::Prepare(Preparation::Level(init)),
                SequenceElement::Delay(delay_us),
                SequenceElement::Measure,
            ],
        )
    }

    /// Logical echo: `+L`, half delay, π, half delay, project at zero phase.
    pub fn hahn_echo(delay_us: f64) -> Result<Self> {
        Self::echo(ExperimentKind::HahnEcho, delay_us)
    }

    pub fn ramsey(delay_us: f64, detuning_hz: f64) -> Result<Self> {
        Self::ramsey_kind(ExperimentKind::Ramsey, delay_us, detuning_hz)
    }

    /// Unencoded relaxation reference: excite one mode, wait, measure.
    pub fn physical_t1(mode: Mode, delay_us: f64) -> Result<Self> {
        Self::new(
            ExperimentKind::PhysicalT1(mode),
            vec![
                SequenceElement::Prepare(Preparation::Level(mode.excited_level())),
                SequenceElement::Delay(delay_us),
                SequenceElement::Measure,
            ],
        )
    }

    pub fn physical_echo(mode: Mode, delay_us: f64) -> Result<Self> {
        Self::echo(ExperimentKind::PhysicalEcho(mode), delay_us)
    }

    pub fn physical_ramsey(mode: Mode, delay_us: f64, detuning_hz: f64) -> Result<Self> {
        Self::ramsey_kind(ExperimentKind::PhysicalRamsey(mode), delay_us, detuning_hz)
    }

    /// Canonical sequence for an experiment kind at one delay.
    ///
    /// `init` selects the prepared level for relaxation experiments and is
    /// ignored otherwise.
    pub fn for_experiment(kind: ExperimentKind, delay_us: f64, init: DimonLevel, detuning_hz: f64) -> Result<Self> {
        match kind {
            ExperimentKind::Bitflip => Self::bitflip(init, delay_us),
            ExperimentKind::HahnEcho => Self::hahn_echo(delay_us),
            ExperimentKind::Ramsey => Self::ramsey(delay_us, detuning_hz),
            ExperimentKind::PhysicalT1(m) => Self::physical_t1(m, delay_us),
            ExperimentKind::PhysicalEcho(m) => Self::physical_echo(m, delay_us),
            ExperimentKind::PhysicalRamsey(m) => Self::physical_ramsey(m, delay_us, detuning_hz),
        }
    }

    fn echo(kind: ExperimentKind, delay_us: f64) -> Result<Self> {
        let home = kind.frame().pair().0;
        Self::new(
            kind,
            vec![
                SequenceElement::Prepare(Preparation::Superposition(home)),
                SequenceElement::Delay(delay_us / 2.0),
                SequenceElement::Pi,
                SequenceElement::Delay(delay_us / 2.0),
                SequenceElement::Project(0.0),
                SequenceElement::Measure,
            ],
        )
    }

    fn ramsey_kind(kind: ExperimentKind, delay_us: f64, detuning_hz: f64) -> Result<Self> {
        if !detuning_hz.is_finite() {
            return Err(Error::MalformedSequence("detuning must be finite".into()));
        }
        let home = kind.frame().pair().0;
        Self::new(
            kind,
            vec![
                SequenceElement::Prepare(Preparation::Superposition(home)),
                SequenceElement::Delay(delay_us),
                SequenceElement::Project(ramsey_phase(detuning_hz, delay_us)),
                SequenceElement::Measure,
            ],
        )
    }

    pub fn kind(&self) -> ExperimentKind {
        self.kind
    }

    pub fn frame(&self) -> Frame {
        self.kind.frame()
    }

    pub fn elements(&self) -> &[SequenceElement] {
        &self.elements
    }

    pub fn total_delay_us(&self) -> f64 {
        self.elements
            .iter()
            .map(|e| match e {
                SequenceElement::Delay(t) => *t,
                _ => 0.0,
            })
            .sum()
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::MalformedSequence(m));
        let els = &self.elements;
        if !matches!(els.first(), Some(SequenceElement::Prepare(_))) {
            return bad("sequence must start with prepare".into());
        }
        if !matches!(els.last(), Some(SequenceElement::Measure)) {
            return bad("sequence must end with measure".into());
        }
        let frame = self.frame();
        let mut pis = Vec::new();
        for (i, e) in els.iter().enumerate() {
            match *e {
                SequenceElement::Prepare(_) if i > 0 => return bad(format!("prepare at position {i}")),
                SequenceElement::Prepare(Preparation::Superposition(home)) if !frame.contains(home) => {
                    return bad(format!("superposition pole {home} outside the {frame:?} frame"));
                }
                SequenceElement::Measure if i + 1 < els.len() => return bad(format!("measure at position {i}")),
                SequenceElement::Delay(t) if !(t >= 0.0 && t.is_finite()) => {
                    return bad(format!("delay {t} at position {i}"));
                }
                SequenceElement::Project(phi) if !phi.is_finite() => {
                    return bad(format!("projection phase {phi} at position {i}"));
                }
                SequenceElement::Pi => pis.push(i),
                _ => {}
            }
        }
        if matches!(self.kind, ExperimentKind::HahnEcho | ExperimentKind::PhysicalEcho(_)) {
            if pis.len() != 1 {
                return bad(format!("echo needs exactly one pi pulse, found {}", pis.len()));
            }
            let split = |range: &[SequenceElement]| -> f64 {
                range
                    .iter()
                    .map(|e| if let SequenceElement::Delay(t) = e { *t } else { 0.0 })
                    .sum()
            };
            let before = split(&els[..pis[0]]);
            let after = split(&els[pis[0]..]);
            if (before - after).abs() > 1e-9 * (before + after).max(1.0) {
                return bad(format!("echo pi is not centred ({before} us before, {after} us after)"));
            }
        }
        Ok(())
    }
}

/// Projection phase realising a virtual detuning: 2π Δf Δt.
pub fn ramsey_phase(detuning_hz: f64, delay_us: f64) -> f64 {
    2.0 * PI * detuning_hz * delay_us * 1e-6
}
