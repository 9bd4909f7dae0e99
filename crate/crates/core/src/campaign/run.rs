//! Campaign execution with an on-disk archive that can be resumed.

use std::fs::{self, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::{config_hash, CampaignConfig, CampaignDevice};
use super::series::{MetricRecord, MetricSeries, METRICS_HEADER};
use crate::analysis::{SeriesSource, MIN_SAMPLES, SERIES_HEADER};
use crate::device::Mode;
use crate::dynamics::{synthesize_noise, ExperimentKind, ModeOffsets, TrajectoryEngine};
use crate::error::{Error, Result};
use crate::experiment::{acquire, derive_seed, extract_metrics, Metric, MetricOptions, Readout, Sweep};
use crate::metrology::write_trace_csv;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const METRICS_FILE: &str = "metrics.csv";
pub const TRACES_DIR: &str = "traces";
pub const SERIES_DIR: &str = "series";
/// Invocation record written by front ends.
pub const COMMAND_FILE: &str = "command.json";

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CampaignOptions {
    pub resume: bool,
    /// Delete a previous archive in the output directory first.
    pub force: bool,
    /// Stop after this many traces in this invocation.
    pub stop_after: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CampaignManifest {
    pub tool: String,
    pub version: String,
    pub seed: u64,
    pub config_hash: String,
    pub total_traces: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub completed: usize,
    pub metrics_bytes: u64,
}

#[derive(Debug, Clone)]
pub struct CampaignOutcome {
    pub series: MetricSeries,
    pub completed: usize,
    pub total: usize,
}

impl CampaignOutcome {
    pub fn finished(&self) -> bool {
        self.completed == self.total
    }
}

/// One scheduled trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceSlot {
    pub rep: usize,
    pub device: usize,
    pub slot: usize,
    pub kind: ExperimentKind,
    pub timestamp_s: f64,
}

/// Every trace in execution order: repetition, then device, then experiment.
pub fn schedule(config: &CampaignConfig) -> Vec<TraceSlot> {
    let kinds = config.schedule_kinds();
    let s = kinds.len();
    let mut out = Vec::with_capacity(config.total_traces());
    for rep in 0..config.repetitions {
        for device in 0..config.devices.len() {
            for (slot, &kind) in kinds.iter().enumerate() {
                out.push(TraceSlot {
                    rep,
                    device,
                    slot,
                    kind,
                    timestamp_s: ((rep * s + slot) as f64) * config.trace_interval_s,
                });
            }
        }
    }
    out
}

/// Slowly varying mode offsets for each `(rep, slot)` of one device, sampled on the trace clock.
pub fn persistent_offsets(config: &CampaignConfig, device: usize) -> Result<Vec<ModeOffsets>> {
    let n = config.repetitions * config.schedule_kinds().len();
    let mut out = vec![ModeOffsets::default(); n];
    let dt_us = config.trace_interval_s * 1e6;
    for (pi, p) in config.noise.iter().enumerate() {
        if !p.persistent {
            continue;
        }
        let path = synthesize_noise(p, dt_us * n as f64, dt_us, derive_seed(config.seed, &[2, device as u64, pi as u64]))?;
        let (wd, wq) = p.coupling.mode_weights();
        for (o, v) in out.iter_mut().zip(path) {
            o.d_hz += wd * v;
            o.q_hz += wq * v;
        }
    }
    Ok(out)
}

pub fn trace_file_name(device: &str, kind: ExperimentKind, rep: usize) -> String {
    format!("{device}_{}_{rep:04}.csv", kind.tag())
}

fn io_at(path: &Path) -> impl FnOnce(io::Error) -> Error + '_ {
    move |e| Error::io(path, e)
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("json.tmp");
    fs::write(&tmp, bytes).map_err(io_at(&tmp))?;
    fs::rename(&tmp, path).map_err(io_at(path))
}

fn owned_paths(out: &Path) -> Vec<PathBuf> {
    [MANIFEST_FILE, CHECKPOINT_FILE, METRICS_FILE, TRACES_DIR, SERIES_DIR, COMMAND_FILE, "checkpoint.json.tmp"]
        .iter()
        .map(|n| out.join(n))
        .collect()
}

fn has_archive(out: &Path) -> bool {
    owned_paths(out).iter().any(|p| p.exists())
}

fn remove_archive(out: &Path) -> Result<()> {
    for p in owned_paths(out) {
        let r = if p.is_dir() {
            fs::remove_dir_all(&p)
        } else if p.exists() {
            fs::remove_file(&p)
        } else {
            Ok(())
        };
        r.map_err(io_at(&p))?;
    }
    Ok(())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(io_at(path))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: e.line() as u64,
        message: e.to_string(),
    })
}

pub fn run_campaign(config: &CampaignConfig, out: &Path) -> Result<CampaignOutcome> {
    run_campaign_with(config, out, &CampaignOptions::default())
}

pub fn run_campaign_with(config: &CampaignConfig, out: &Path, opts: &CampaignOptions) -> Result<CampaignOutcome> {
    config.validate()?;
    let devices = config.resolve_devices()?;
    let hash = config_hash(config, &devices)?;
    let total = config.total_traces();
    let manifest_path = out.join(MANIFEST_FILE);
    let checkpoint_path = out.join(CHECKPOINT_FILE);
    let metrics_path = out.join(METRICS_FILE);

    let mut checkpoint = Checkpoint::default();
    let resuming = opts.resume && manifest_path.exists();
    if resuming {
        let m: CampaignManifest = read_json(&manifest_path)?;
        if m.config_hash != hash {
            return Err(Error::invalid(format!(
                "archive in {} was written by a different configuration",
                out.display()
            )));
        }
        if checkpoint_path.exists() {
            checkpoint = read_json(&checkpoint_path)?;
        }
        if checkpoint.completed > total {
            return Err(Error::invalid("checkpoint is ahead of the schedule"));
        }
        let f = OpenOptions::new().write(true).open(&metrics_path).map_err(io_at(&metrics_path))?;
        f.set_len(checkpoint.metrics_bytes).map_err(io_at(&metrics_path))?;
        log::info!("resuming at trace {}/{total}", checkpoint.completed);
    } else {
        if has_archive(out) {
            if !opts.force {
                return Err(Error::io(
                    out,
                    io::Error::new(io::ErrorKind::AlreadyExists, "campaign archive exists; resume or force"),
                ));
            }
            remove_archive(out)?;
        }
        fs::create_dir_all(out).map_err(io_at(out))?;
        let manifest = CampaignManifest {
            tool: "ddq".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            seed: config.seed,
            config_hash: hash,
            total_traces: total,
        };
        fs::write(&manifest_path, serde_json::to_string_pretty(&manifest)? + "\n").map_err(io_at(&manifest_path))?;
        fs::write(&metrics_path, format!("{METRICS_HEADER}\n")).map_err(io_at(&metrics_path))?;
        checkpoint.metrics_bytes = (METRICS_HEADER.len() + 1) as u64;
        write_atomic(&checkpoint_path, serde_json::to_string(&checkpoint)?.as_bytes())?;
    }
    let traces_dir = out.join(TRACES_DIR);
    fs::create_dir_all(&traces_dir).map_err(io_at(&traces_dir))?;

    let model = config.readout.model();
    let mut engines = Vec::with_capacity(devices.len());
    let mut readouts = Vec::with_capacity(devices.len());
    let mut offsets = Vec::with_capacity(devices.len());
    for (d, dev) in devices.iter().enumerate() {
        engines.push(TrajectoryEngine::from_rates(dev.rates.clone(), &config.noise)?);
        readouts.push(Readout::calibrate(
            &dev.params,
            model.clone(),
            config.training_shots,
            derive_seed(config.seed, &[3, d as u64]),
        )?);
        offsets.push(persistent_offsets(config, d)?);
    }

    let kinds_per_rep = config.schedule_kinds().len();
    let mut done_now = 0;
    for (g, slot) in schedule(config).into_iter().enumerate().skip(checkpoint.completed) {
        if opts.stop_after.is_some_and(|n| done_now >= n) {
            break;
        }
        let dev = &devices[slot.device];
        let engine = &mut engines[slot.device];
        engine.set_offsets(offsets[slot.device][slot.rep * kinds_per_rep + slot.slot]);
        let sweep = Sweep {
            kind: slot.kind,
            delays_us: config.delays_us.for_kind(slot.kind).to_vec(),
            shots: config.shots_per_point,
            detuning_hz: config.ramsey_detuning_hz,
        };
        let path = [slot.device, slot.rep, slot.slot].map(|x| x as u64);
        let traces = acquire(
            engine,
            &readouts[slot.device],
            &sweep,
            derive_seed(config.seed, &[1, path[0], path[1], path[2]]),
            slot.timestamp_s,
        )?;
        let trace_path = traces_dir.join(trace_file_name(&dev.name, slot.kind, slot.rep));
        write_trace_csv(&trace_path, &traces)?;
        let metric_opts = MetricOptions {
            cutoff_us: config.fit_cutoff_us,
            bootstrap_resamples: config.bootstrap_resamples,
            quantile: config.bootstrap_quantile,
            seed: derive_seed(config.seed, &[4, path[0], path[1], path[2]]),
        };
        let mut rows = String::new();
        for est in extract_metrics(slot.kind, &traces, &metric_opts) {
            if let Some(e) = &est.error {
                log::warn!("{} {} at {} s: {e}", dev.name, est.metric, slot.timestamp_s);
            }
            rows.push_str(
                &MetricRecord {
                    timestamp_s: slot.timestamp_s,
                    device: dev.name.clone(),
                    metric: est.metric.name(),
                    estimate: est.estimate,
                    lower: est.lower,
                    upper: est.upper,
                }
                .csv_row(),
            );
        }
        let mut f = OpenOptions::new().append(true).open(&metrics_path).map_err(io_at(&metrics_path))?;
        f.write_all(rows.as_bytes()).map_err(io_at(&metrics_path))?;
        f.sync_data().map_err(io_at(&metrics_path))?;
        checkpoint = Checkpoint {
            completed: g + 1,
            metrics_bytes: checkpoint.metrics_bytes + rows.len() as u64,
        };
        write_atomic(&checkpoint_path, serde_json::to_string(&checkpoint)?.as_bytes())?;
        done_now += 1;
        log::debug!("trace {}/{total} done", g + 1);
    }

    let series = MetricSeries::read_csv(&metrics_path)?;
    if checkpoint.completed == total {
        write_frequency_series(&series, &devices, &out.join(SERIES_DIR))?;
    }
    Ok(CampaignOutcome {
        series,
        completed: checkpoint.completed,
        total,
    })
}

/// Writes `{device}_delta_f.csv` with the raw finite detunings of every
/// source that has enough samples for spectral analysis.
fn write_frequency_series(series: &MetricSeries, devices: &[CampaignDevice], dir: &Path) -> Result<()> {
    let sources = [
        (Metric::DeltaF, SeriesSource::Logical),
        (Metric::ModeDeltaF(Mode::D), SeriesSource::DMode),
        (Metric::ModeDeltaF(Mode::Q), SeriesSource::QMode),
    ];
    for dev in devices {
        let mut body = String::new();
        for (metric, source) in sources {
            let (t, v) = series.values(&dev.name, &metric.name());
            let rows: Vec<(f64, f64)> = t.into_iter().zip(v).filter(|(_, v)| v.is_finite()).collect();
            if rows.len() < MIN_SAMPLES {
                continue;
            }
            for (t, v) in rows {
                body.push_str(&format!("{t},{v},{source}\n"));
            }
        }
        if !body.is_empty() {
            fs::create_dir_all(dir).map_err(io_at(dir))?;
            let path = dir.join(format!("{}_delta_f.csv", dev.name));
            fs::write(&path, format!("{SERIES_HEADER}\n{body}")).map_err(io_at(&path))?;
        }
    }
    Ok(())
}
