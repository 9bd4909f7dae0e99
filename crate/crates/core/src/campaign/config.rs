//! Campaign description loaded from JSON.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::device::{DeviceConfig, DeviceParams, Mode};
use crate::dynamics::{build_rate_matrix, ExperimentKind, NoiseProcess, RateMatrix, DEFAULT_RAMSEY_DETUNING_HZ};
use crate::error::{Error, Result};
use crate::experiment::DEFAULT_TRAINING_SHOTS;
use crate::metrology::{DEFAULT_LINEAR_CUTOFF_US, DEFAULT_QUANTILE, DEFAULT_RESAMPLES};
use crate::readout::ReadoutModel;

pub const DEFAULT_TRACE_INTERVAL_S: f64 = 100.0;
pub const MIN_SHOTS_PER_POINT: u64 = 100;
pub const MAX_DEVICES: usize = 3;

/// A device given either as a shipped preset or a config file path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceRef {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    /// Overrides the thermal occupation of both modes.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_th: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LogicalExperiment {
    Bitflip,
    HahnEcho,
    Ramsey,
}

impl LogicalExperiment {
    pub fn kind(self) -> ExperimentKind {
        match self {
            LogicalExperiment::Bitflip => ExperimentKind::Bitflip,
            LogicalExperiment::HahnEcho => ExperimentKind::HahnEcho,
            LogicalExperiment::Ramsey => ExperimentKind::Ramsey,
        }
    }
}

/// Unencoded reference experiment, run on both modes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhysicalReference {
    T1,
    T2e,
    T2r,
}

impl PhysicalReference {
    pub fn kind(self, mode: Mode) -> ExperimentKind {
        match self {
            PhysicalReference::T1 => ExperimentKind::PhysicalT1(mode),
            PhysicalReference::T2e => ExperimentKind::PhysicalEcho(mode),
            PhysicalReference::T2r => ExperimentKind::PhysicalRamsey(mode),
        }
    }
}

fn grid(start: f64, step: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| start + step * i as f64).collect()
}

/// Per-experiment delay grids (μs); missing entries use the defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DelayGrids {
    pub bitflip: Vec<f64>,
    pub hahn_echo: Vec<f64>,
    pub ramsey: Vec<f64>,
    pub physical_t1: Vec<f64>,
    pub physical_echo: Vec<f64>,
    pub physical_ramsey: Vec<f64>,
}

impl Default for DelayGrids {
    fn default() -> Self {
        let long = vec![
            0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0, 40.0, 60.0, 80.0, 100.0, 150.0, 200.0, 300.0, 400.0,
        ];
        Self {
            bitflip: long.clone(),
            hahn_echo: long,
            ramsey: grid(0.0, 2.8, 21),
            physical_t1: grid(0.0, 20.0, 15),
            physical_echo: grid(0.0, 10.0, 15),
            physical_ramsey: grid(0.0, 1.5, 29),
        }
    }
}

impl DelayGrids {
    pub fn for_kind(&self, kind: ExperimentKind) -> &[f64] {
        match kind {
            ExperimentKind::Bitflip => &self.bitflip,
            ExperimentKind::HahnEcho => &self.hahn_echo,
            ExperimentKind::Ramsey => &self.ramsey,
            ExperimentKind::PhysicalT1(_) => &self.physical_t1,
            ExperimentKind::PhysicalEcho(_) => &self.physical_echo,
            ExperimentKind::PhysicalRamsey(_) => &self.physical_ramsey,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReadoutSettings {
    pub sigma: f64,
    pub radius_sigma: f64,
    pub t_ro_us: f64,
}

impl Default for ReadoutSettings {
    fn default() -> Self {
        let m = ReadoutModel::default();
        Self {
            sigma: m.sigma,
            radius_sigma: crate::readout::model::DEFAULT_RADIUS_SIGMA,
            t_ro_us: m.t_ro_us,
        }
    }
}

impl ReadoutSettings {
    pub fn model(&self) -> ReadoutModel {
        ReadoutModel::circle(self.sigma, self.radius_sigma, self.t_ro_us)
    }
}

fn default_experiments() -> Vec<LogicalExperiment> {
    vec![
        LogicalExperiment::Bitflip,
        LogicalExperiment::HahnEcho,
        LogicalExperiment::Ramsey,
    ]
}

fn default_references() -> Vec<PhysicalReference> {
    vec![PhysicalReference::T1]
}

fn default_interval() -> f64 {
    DEFAULT_TRACE_INTERVAL_S
}

fn default_detuning() -> f64 {
    DEFAULT_RAMSEY_DETUNING_HZ
}

fn default_training() -> usize {
    DEFAULT_TRAINING_SHOTS
}

fn default_resamples() -> usize {
    DEFAULT_RESAMPLES
}

fn default_quantile() -> f64 {
    DEFAULT_QUANTILE
}

fn default_cutoff() -> f64 {
    DEFAULT_LINEAR_CUTOFF_US
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CampaignConfig {
    pub seed: u64,
    pub devices: Vec<DeviceRef>,
    #[serde(default = "default_experiments")]
    pub experiments: Vec<LogicalExperiment>,
    #[serde(default = "default_references")]
    pub physical_references: Vec<PhysicalReference>,
    pub repetitions: usize,
    pub shots_per_point: u64,
    #[serde(default)]
    pub delays_us: DelayGrids,
    #[serde(default = "default_interval")]
    pub trace_interval_s: f64,
    #[serde(default = "default_detuning")]
    pub ramsey_detuning_hz: f64,
    /// Applied to every device; `persistent` processes evolve over virtual time.
    #[serde(default)]
    pub noise: Vec<NoiseProcess>,
    #[serde(default)]
    pub readout: ReadoutSettings,
    #[serde(default = "default_training")]
    pub training_shots: usize,
    #[serde(default = "default_resamples")]
    pub bootstrap_resamples: usize,
    #[serde(default = "default_quantile")]
    pub bootstrap_quantile: f64,
    #[serde(default = "default_cutoff")]
    pub fit_cutoff_us: f64,
    /// Directory that relative device paths resolve against.
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

/// A resolved device: parameters for readout, rates for the dynamics.
#[derive(Debug, Clone, PartialEq)]
pub struct CampaignDevice {
    pub name: String,
    pub params: DeviceParams,
    pub rates: RateMatrix,
}

impl CampaignDevice {
    pub fn new(name: impl Into<String>, params: DeviceParams) -> Self {
        let rates = build_rate_matrix(&params);
        Self {
            name: name.into(),
            params,
            rates,
        }
    }
}

impl CampaignConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let c: Self = serde_json::from_str(text)?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut c: Self = serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e.line() as u64,
            message: e.to_string(),
        })?;
        c.base_dir = path.parent().map(Path::to_path_buf);
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.devices.is_empty() || self.devices.len() > MAX_DEVICES {
            return Err(Error::invalid(format!(
                "campaign needs 1 to {MAX_DEVICES} devices, got {}",
                self.devices.len()
            )));
        }
        for (i, d) in self.devices.iter().enumerate() {
            if d.name.is_empty() || d.name.contains([',', '/', '\\']) {
                return Err(Error::invalid(format!("device name {:?} is not usable in file names", d.name)));
            }
            if self.devices[..i].iter().any(|e| e.name == d.name) {
                return Err(Error::invalid(format!("duplicate device name {:?}", d.name)));
            }
            if d.preset.is_some() == d.path.is_some() {
                return Err(Error::invalid(format!("device {:?} needs exactly one of preset or path", d.name)));
            }
        }
        if self.experiments.is_empty() {
            return Err(Error::invalid("no experiments selected"));
        }
        for (i, e) in self.experiments.iter().enumerate() {
            if self.experiments[..i].contains(e) {
                return Err(Error::invalid(format!("experiment {e:?} listed twice")));
            }
        }
        if self.repetitions == 0 {
            return Err(Error::invalid("repetitions must be >= 1"));
        }
        if self.shots_per_point < MIN_SHOTS_PER_POINT {
            return Err(Error::invalid(format!(
                "shots_per_point must be >= {MIN_SHOTS_PER_POINT}, got {}",
                self.shots_per_point
            )));
        }
        for kind in self.schedule_kinds() {
            let g = self.delays_us.for_kind(kind);
            if g.is_empty() {
                return Err(Error::invalid(format!("delay grid for {kind} is empty")));
            }
            if g.iter().any(|d| !(d.is_finite() && *d >= 0.0)) || g.windows(2).any(|w| w[1] <= w[0]) {
                return Err(Error::invalid(format!("delay grid for {kind} must be ascending and >= 0")));
            }
        }
        if !(self.trace_interval_s > 0.0 && self.trace_interval_s.is_finite()) {
            return Err(Error::invalid("trace_interval_s must be positive"));
        }
        if !self.ramsey_detuning_hz.is_finite() {
            return Err(Error::invalid("ramsey_detuning_hz must be finite"));
        }
        for p in &self.noise {
            p.validate()?;
        }
        self.readout.model().validate()?;
        if self.training_shots < 3 * crate::readout::gmm::MIN_SHOTS_PER_LABEL {
            return Err(Error::invalid("training_shots too small for three labels"));
        }
        if !(self.bootstrap_quantile > 0.0 && self.bootstrap_quantile < 0.5) {
            return Err(Error::invalid("bootstrap_quantile must lie in (0, 0.5)"));
        }
        if !(self.fit_cutoff_us > 0.0) {
            return Err(Error::invalid("fit_cutoff_us must be positive"));
        }
        Ok(())
    }

    /// Experiments run per device per repetition, in execution order.
    pub fn schedule_kinds(&self) -> Vec<ExperimentKind> {
        let mut out: Vec<ExperimentKind> = self.experiments.iter().map(|e| e.kind()).collect();
        for r in &self.physical_references {
            for m in [Mode::D, Mode::Q] {
                let k = r.kind(m);
                if !out.contains(&k) {
                    out.push(k);
                }
            }
        }
        out
    }

    pub fn total_traces(&self) -> usize {
        self.repetitions * self.devices.len() * self.schedule_kinds().len()
    }

    pub fn resolve_devices(&self) -> Result<Vec<CampaignDevice>> {
        self.devices
            .iter()
            .map(|d| {
                let cfg = match (&d.preset, &d.path) {
                    (Some(p), None) => DeviceConfig::preset(p)?,
                    (None, Some(path)) => {
                        let full = match &self.base_dir {
                            Some(base) if path.is_relative() => base.join(path),
                            _ => path.clone(),
                        };
                        DeviceConfig::load(&full)?
                    }
                    _ => return Err(Error::invalid(format!("device {:?} needs a preset or a path", d.name))),
                };
                let mut params = cfg.to_params()?;
                if let Some(n) = d.n_th {
                    params = params.with_n_th(n);
                    params.validate()?;
                }
                Ok(CampaignDevice::new(&d.name, params))
            })
            .collect()
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Hash of the configuration together with the resolved device parameters.
pub fn config_hash(config: &CampaignConfig, devices: &[CampaignDevice]) -> Result<String> {
    let mut text = serde_json::to_string(config)?;
    for d in devices {
        text.push('\n');
        text.push_str(&d.name);
        text.push_str(&serde_json::to_string(&d.params)?);
        text.push_str(&format!("{:?}", d.rates.generator()));
    }
    Ok(sha256_hex(text.as_bytes()))
}
