use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde_json::{json, Value};

use ddq_core::analysis::{
    allan_curve, fit_psd_model, flag_bumps, read_series_csv, welch_psd, write_allan_csv, write_psd_csv,
    AllanModelForm, FrequencySeries, SeriesSource,
};
use ddq_core::campaign::{
    format_median_table, moving_average, run_campaign_with, sha256_hex, summarize_series, CampaignConfig,
    CampaignOptions, DelayGrids, MetricSeries, COMMAND_FILE, METRICS_FILE,
};
use ddq_core::device::{DeviceConfig, DimonLevel};
use ddq_core::dynamics::{write_indexed_trajectory_csv, ExperimentKind, NoiseProcess, TrajectoryEngine};
use ddq_core::experiment::{
    acquire_shots, derive_seed, extract_metrics, preparations, MetricOptions, Readout, Sweep,
    DEFAULT_TRAINING_SHOTS,
};
use ddq_core::metrology::{read_trace_csv, write_trace_csv, TraceData, TracePoint};
use ddq_core::readout::{write_shots_csv, ReadoutModel, ShotRecord};

use crate::{AllanArgs, AnalyzeArgs, CampaignArgs, Globals, PsdArgs, SimShotsArgs, SummarizeArgs};

pub enum CliError {
    Input(String),
    Output(String),
    NotConverged { message: String, details: String },
    Core(ddq_core::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Input(_) => 2,
            CliError::Output(_) => 3,
            CliError::NotConverged { .. } => 4,
            CliError::Core(e) => match e {
                ddq_core::Error::Io { .. } => 3,
                ddq_core::Error::NonConvergence(_) => 4,
                _ => 2,
            },
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Input(m) | CliError::Output(m) => f.write_str(m),
            CliError::NotConverged { message, .. } => f.write_str(message),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

impl From<ddq_core::Error> for CliError {
    fn from(e: ddq_core::Error) -> Self {
        CliError::Core(e)
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

/// Reads an input file; a missing or unreadable input is a usage error.
fn read_input(path: &Path) -> CliResult<Vec<u8>> {
    fs::read(path).map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))
}

fn require_input(path: &Path) -> CliResult<()> {
    read_input(path).map(|_| ())
}

fn check_output(path: &Path, g: &Globals) -> CliResult<()> {
    if path.exists() && !g.force {
        return Err(CliError::Output(format!(
            "{} exists; pass --force to overwrite",
            path.display()
        )));
    }
    Ok(())
}

fn write_output(path: &Path, body: &str) -> CliResult<()> {
    fs::write(path, body).map_err(|e| CliError::Output(format!("cannot write {}: {e}", path.display())))
}

fn sidecar(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

/// Invocation record: flags, seed, input hashes and tool version.
fn invocation(g: &Globals, seed: Option<u64>, inputs: &[&Path]) -> CliResult<Value> {
    let mut hashes = Vec::new();
    for p in inputs {
        hashes.push(json!({"path": p.display().to_string(), "sha256": sha256_hex(&read_input(p)?)}));
    }
    Ok(json!({
        "tool": "ddq",
        "version": env!("CARGO_PKG_VERSION"),
        "args": g.argv.iter().skip(1).collect::<Vec<_>>(),
        "seed": seed,
        "inputs": hashes,
    }))
}

fn write_json(path: &Path, v: &Value) -> CliResult<()> {
    let text = serde_json::to_string_pretty(v).map_err(ddq_core::Error::from)? + "\n";
    write_output(path, &text)
}

fn write_manifest(out: &Path, g: &Globals, seed: Option<u64>, inputs: &[&Path], extra: Value) -> CliResult<()> {
    let mut m = invocation(g, seed, inputs)?;
    if let (Value::Object(map), Value::Object(more)) = (&mut m, extra) {
        map.extend(more);
    }
    write_json(&sidecar(out, ".manifest.json"), &m)
}

/// Non-finite numbers do not survive JSON; they are spelled out.
fn num(x: f64) -> Value {
    if x.is_finite() {
        json!(x)
    } else {
        json!(x.to_string())
    }
}

fn parse_kind(s: &str) -> CliResult<ExperimentKind> {
    s.parse().map_err(|e: ddq_core::Error| CliError::Input(e.to_string()))
}

fn load_device(spec: &str) -> CliResult<DeviceConfig> {
    let path = Path::new(spec);
    if !path.exists() && matches!(spec, "q1" | "q2" | "q3") {
        return Ok(DeviceConfig::preset(spec)?);
    }
    let text = read_input(path)?;
    let text = String::from_utf8(text).map_err(|_| CliError::Input(format!("{} is not UTF-8", path.display())))?;
    DeviceConfig::from_json(&text)
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn load_noise(path: &Path) -> CliResult<Vec<NoiseProcess>> {
    let bytes = read_input(path)?;
    serde_json::from_slice(&bytes).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn level_slot(level: DimonLevel) -> usize {
    match level {
        DimonLevel::G00 => 0,
        DimonLevel::L01 => 1,
        _ => 2,
    }
}

/// Counts assigned labels per preparation and delay, in acquisition order.
fn traces_from_shots(kind: ExperimentKind, shots: &[(ShotRecord, f64)]) -> Vec<TraceData> {
    let mut out: Vec<TraceData> = Vec::new();
    for (rec, delay) in shots {
        let idx = match out.iter().position(|t| t.init_label == rec.prep_label) {
            Some(i) => i,
            None => {
                out.push(TraceData {
                    kind,
                    init_label: rec.prep_label.clone(),
                    timestamp_s: 0.0,
                    points: Vec::new(),
                });
                out.len() - 1
            }
        };
        let points = &mut out[idx].points;
        if points.last().is_none_or(|p| p.delay_us != *delay) {
            points.push(TracePoint {
                delay_us: *delay,
                n00: 0,
                n01: 0,
                n10: 0,
                n_total: 0,
            });
        }
        let p = points.last_mut().expect("just pushed");
        p.n_total += 1;
        match rec.assigned_label.map(level_slot) {
            Some(0) => p.n00 += 1,
            Some(1) => p.n01 += 1,
            Some(_) => p.n10 += 1,
            None => {}
        }
    }
    out
}

pub fn sim_shots(a: &SimShotsArgs, g: &Globals) -> CliResult<()> {
    let device = load_device(&a.config)?;
    let params = device.to_params().map_err(|e| CliError::Input(format!("{}: {e}", a.config)))?;
    let kind = parse_kind(&a.experiment)?;
    let noise = match &a.noise {
        Some(p) => load_noise(p)?,
        None => Vec::new(),
    };
    let delays = a
        .delays
        .clone()
        .unwrap_or_else(|| DelayGrids::default().for_kind(kind).to_vec());
    if let Some(init) = &a.init {
        if !preparations(kind).iter().any(|(l, _)| l == init) {
            return Err(CliError::Input(format!("--init {init} is not a preparation of {kind}")));
        }
    }
    let outputs: Vec<&PathBuf> = [Some(&a.out), a.trace_out.as_ref(), a.trajectories_out.as_ref(), a.classifier_out.as_ref()]
        .into_iter()
        .flatten()
        .collect();
    for p in &outputs {
        check_output(p, g)?;
    }
    check_output(&sidecar(&a.out, ".manifest.json"), g)?;

    let engine = TrajectoryEngine::new(&params, &noise)?;
    let readout = Readout::calibrate(
        &params,
        ReadoutModel::default(),
        DEFAULT_TRAINING_SHOTS,
        derive_seed(a.seed, &[3, 0]),
    )?;
    let sweep = Sweep {
        kind,
        delays_us: delays,
        shots: a.shots,
        detuning_hz: a.detuning_khz * 1e3,
    };
    sweep.validate().map_err(|e| CliError::Input(e.to_string()))?;
    let mut shots = acquire_shots(&engine, &readout, &sweep, a.seed)?;
    if let Some(init) = &a.init {
        shots.retain(|s| &s.record.prep_label == init);
    }

    let records: Vec<ShotRecord> = shots.iter().map(|s| s.record.clone()).collect();
    write_shots_csv(&a.out, &records)?;

    let mut blocks: Vec<Value> = Vec::new();
    let mut i = 0;
    while i < shots.len() {
        let (label, delay) = (&shots[i].record.prep_label, shots[i].delay_us);
        let j = shots[i..]
            .iter()
            .position(|s| &s.record.prep_label != label || s.delay_us != delay)
            .map_or(shots.len(), |k| i + k);
        blocks.push(json!({
            "prep_label": label,
            "delay_us": delay,
            "first_shot": shots[i].record.shot_index,
            "shots": j - i,
        }));
        i = j;
    }
    let mut inputs: Vec<&Path> = Vec::new();
    if Path::new(&a.config).exists() {
        inputs.push(Path::new(&a.config));
    }
    if let Some(p) = &a.noise {
        inputs.push(p);
    }
    write_manifest(
        &a.out,
        g,
        Some(a.seed),
        &inputs,
        json!({"experiment": kind.tag(), "detuning_hz": sweep.detuning_hz, "blocks": blocks}),
    )?;

    if let Some(p) = &a.trace_out {
        let pairs: Vec<(ShotRecord, f64)> = shots.iter().map(|s| (s.record.clone(), s.delay_us)).collect();
        write_trace_csv(p, &traces_from_shots(kind, &pairs))?;
    }
    if let Some(p) = &a.trajectories_out {
        write_indexed_trajectory_csv(p, shots.iter().map(|s| (s.record.shot_index, &s.outcome)))?;
    }
    if let Some(p) = &a.classifier_out {
        write_output(p, &(readout.classifier.to_json()? + "\n"))?;
    }
    if g.emit_plot_data {
        let path = sidecar(&a.out, ".plot.csv");
        check_output(&path, g)?;
        let mut body = String::from("prep_label,delay_us,i,q,assigned_label\n");
        for s in &shots {
            let label = s.record.assigned_label.map_or("", |l| l.label());
            body.push_str(&format!("{},{},{},{},{label}\n", s.record.prep_label, s.delay_us, s.record.i, s.record.q));
        }
        write_output(&path, &body)?;
    }
    Ok(())
}

pub fn analyze(a: &AnalyzeArgs, g: &Globals) -> CliResult<()> {
    let kind = parse_kind(&a.kind)?;
    require_input(&a.trace)?;
    let seed = match (a.bootstrap, a.seed) {
        (0, s) => s.unwrap_or(0),
        (_, Some(s)) => s,
        (_, None) => return Err(CliError::Input("--seed is required when --bootstrap > 0".into())),
    };
    check_output(&a.out, g)?;
    check_output(&sidecar(&a.out, ".manifest.json"), g)?;
    let traces = read_trace_csv(&a.trace, kind)?;
    let opts = MetricOptions {
        cutoff_us: a.cutoff_us,
        bootstrap_resamples: a.bootstrap,
        quantile: a.quantile,
        seed,
    };
    let estimates = extract_metrics(kind, &traces, &opts);
    let mut metrics = Vec::new();
    let mut failed = Vec::new();
    for e in &estimates {
        let mut m = json!({
            "metric": e.metric.name(),
            "unit": e.metric.unit(),
            "estimate": num(e.estimate),
            "resolvable": e.resolvable,
        });
        if let (Some(l), Some(u)) = (e.lower, e.upper) {
            m["lower"] = num(l);
            m["upper"] = num(u);
        }
        if let Some(err) = &e.error {
            m["error"] = json!(err);
        }
        if let Some(d) = &e.diagnostics {
            m["diagnostics"] = serde_json::to_value(d).map_err(ddq_core::Error::from)?;
            failed.push(format!("{}: {d}", e.metric));
        }
        if let Some(f) = &e.fit {
            m["fit"] = serde_json::to_value(f).map_err(ddq_core::Error::from)?;
        }
        metrics.push(m);
    }
    write_json(&a.out, &json!({"kind": kind.tag(), "bootstrap_resamples": a.bootstrap, "metrics": metrics}))?;
    write_manifest(&a.out, g, (a.bootstrap > 0).then_some(seed), &[&a.trace], json!({}))?;
    if g.emit_plot_data {
        let path = sidecar(&a.out, ".plot.csv");
        check_output(&path, g)?;
        let mut body = String::from("metric,delay_us,fitted,residual\n");
        for e in &estimates {
            if let Some(f) = &e.fit {
                for ((t, y), r) in f.delays_us.iter().zip(&f.fitted).zip(&f.residuals) {
                    body.push_str(&format!("{},{t},{y},{r}\n", e.metric));
                }
            }
        }
        write_output(&path, &body)?;
    }
    if !failed.is_empty() {
        return Err(CliError::NotConverged {
            message: format!("{} fit(s) did not converge; diagnostics in {}", failed.len(), a.out.display()),
            details: failed.join("\n"),
        });
    }
    Ok(())
}

pub fn campaign(a: &CampaignArgs, g: &Globals) -> CliResult<()> {
    require_input(&a.config)?;
    let config = CampaignConfig::load(&a.config).map_err(|e| match e {
        ddq_core::Error::Io { .. } => CliError::Input(e.to_string()),
        other => CliError::Core(other),
    })?;
    let opts = CampaignOptions {
        resume: a.resume,
        force: g.force,
        stop_after: a.stop_after,
    };
    let outcome = run_campaign_with(&config, &a.out, &opts)?;
    let record = invocation(g, Some(config.seed), &[&a.config])?;
    write_json(&a.out.join(COMMAND_FILE), &record)?;
    if outcome.finished() {
        print!("{}", format_median_table(&summarize_series(&outcome.series)));
    } else {
        println!("stopped after {}/{} traces; rerun with --resume", outcome.completed, outcome.total);
    }
    Ok(())
}

fn load_series(input: &Path, source: Option<&str>) -> CliResult<FrequencySeries> {
    require_input(input)?;
    let all = read_series_csv(input)?;
    let want: Option<SeriesSource> = source
        .map(|s| s.parse().map_err(|e: ddq_core::Error| CliError::Input(e.to_string())))
        .transpose()?;
    let (src, t, v) = match want {
        Some(w) => all
            .into_iter()
            .find(|(s, _, _)| *s == w)
            .ok_or_else(|| CliError::Input(format!("{} has no {w} series", input.display())))?,
        None => all.into_iter().next().expect("reader rejects empty files"),
    };
    Ok(FrequencySeries::new(&t, &v, src)?)
}

pub fn allan(a: &AllanArgs, g: &Globals) -> CliResult<()> {
    let series = load_series(&a.input, a.source.as_deref())?;
    check_output(&a.out, g)?;
    if let Some(p) = &a.fit_out {
        check_output(p, g)?;
    }
    let curve = allan_curve(&series)?;
    write_allan_csv(&a.out, &curve)?;
    let form = if a.linear_sum {
        AllanModelForm::LinearSum
    } else {
        AllanModelForm::Quadrature
    };
    let fitted = if a.fit_out.is_some() || g.emit_plot_data {
        Some(flag_bumps(&curve, form)?)
    } else {
        None
    };
    if let (Some(p), Some((fit, bumps))) = (&a.fit_out, &fitted) {
        let v = json!({
            "source": series.source.to_string(),
            "tau0_s": series.tau0_s,
            "samples": series.len(),
            "resampled": series.resampled,
            "fit": fit,
            "bumps": bumps,
        });
        write_json(p, &v)?;
    }
    if let Some((fit, _)) = &fitted {
        let path = sidecar(&a.out, ".plot.csv");
        check_output(&path, g)?;
        let mut body = String::from("tau_s,sigma_hz,model_sigma_hz\n");
        for p in &curve {
            body.push_str(&format!("{},{},{}\n", p.tau_s, p.sigma_hz, fit.sigma(p.tau_s)));
        }
        write_output(&path, &body)?;
    }
    write_manifest(&a.out, g, None, &[&a.input], json!({}))
}

pub fn psd(a: &PsdArgs, g: &Globals) -> CliResult<()> {
    let series = load_series(&a.input, a.source.as_deref())?;
    check_output(&a.out, g)?;
    if let Some(p) = &a.fit_out {
        check_output(p, g)?;
    }
    let spectrum = welch_psd(&series, a.segment)?;
    write_psd_csv(&a.out, &spectrum)?;
    let fit = if a.fit_out.is_some() || g.emit_plot_data {
        Some(fit_psd_model(&spectrum)?)
    } else {
        None
    };
    if let (Some(p), Some(fit)) = (&a.fit_out, &fit) {
        let v = json!({
            "source": series.source.to_string(),
            "segment_len": spectrum.segment_len,
            "segments": spectrum.segments,
            "dof": spectrum.dof,
            "fit": fit,
        });
        write_json(p, &v)?;
    }
    if let Some(fit) = &fit {
        let path = sidecar(&a.out, ".plot.csv");
        check_output(&path, g)?;
        let mut body = String::from("freq_hz,psd_hz2_per_hz,model_hz2_per_hz\n");
        for (f, s) in spectrum.freqs_hz.iter().zip(&spectrum.density).skip(1) {
            body.push_str(&format!("{f},{s},{}\n", fit.density(*f)));
        }
        write_output(&path, &body)?;
    }
    write_manifest(&a.out, g, None, &[&a.input], json!({}))
}

pub fn summarize(a: &SummarizeArgs, g: &Globals) -> CliResult<()> {
    let input = if a.input.is_dir() {
        a.input.join(METRICS_FILE)
    } else {
        a.input.clone()
    };
    require_input(&input)?;
    let series = MetricSeries::read_csv(&input)?;
    let rows = summarize_series(&series);
    let table = format_median_table(&rows);
    print!("{table}");
    if let Some(out) = &a.out {
        check_output(out, g)?;
        write_output(out, &table)?;
        write_manifest(out, g, None, &[&input], json!({}))?;
        if g.emit_plot_data {
            let path = sidecar(out, ".plot.csv");
            check_output(&path, g)?;
            let mut body = String::from("device,metric,timestamp_s,estimate,moving_average\n");
            for d in series.devices() {
                for m in series.metrics(&d) {
                    let (t, v) = series.values(&d, &m);
                    let avg = moving_average(&v, a.window.min(v.len()).max(1))?;
                    for ((t, v), s) in t.iter().zip(&v).zip(&avg) {
                        body.push_str(&format!("{d},{m},{t},{v},{s}\n"));
                    }
                }
            }
            write_output(&path, &body)?;
        }
    }
    Ok(())
}
