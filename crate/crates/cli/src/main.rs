use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;

use commands::CliError;

#[derive(Parser, Debug)]
#[command(name = "ddq", version, about = "Dual-rail dimon simulator and coherence analysis")]
struct Cli {
    /// Worker threads (falls back to DDQ_THREADS, then all cores).
    #[arg(long, global = true, env = "DDQ_THREADS")]
    threads: Option<usize>,
    /// Overwrite existing outputs.
    #[arg(long, global = true)]
    force: bool,
    /// Also write `<out>.plot.json` with the arrays behind each output.
    #[arg(long, global = true)]
    emit_plot_data: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate single-shot IQ records for one experiment sweep.
    SimShots(SimShotsArgs),
    /// Fit the coherence metrics of one trace file.
    Analyze(AnalyzeArgs),
    /// Run or resume a monitoring campaign.
    Campaign(CampaignArgs),
    /// Overlapping Allan deviation of a frequency series.
    Allan(AllanArgs),
    /// Welch power spectral density of a frequency series.
    Psd(PsdArgs),
    /// Per-device medians and spreads of a campaign's metrics.
    Summarize(SummarizeArgs),
}

#[derive(Args, Debug)]
pub struct SimShotsArgs {
    /// Device JSON file, or one of the presets q1, q2, q3.
    #[arg(long)]
    pub config: String,
    #[arg(long)]
    pub experiment: String,
    /// Comma-separated delays in μs; defaults to the campaign grid.
    #[arg(long, value_delimiter = ',')]
    pub delays: Option<Vec<f64>>,
    #[arg(long, default_value_t = 1000)]
    pub shots: u64,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 75.0)]
    pub detuning_khz: f64,
    /// Keep only shots with this preparation label (e.g. 10 or 01).
    #[arg(long)]
    pub init: Option<String>,
    /// JSON list of noise processes.
    #[arg(long)]
    pub noise: Option<PathBuf>,
    /// Also write aggregated counts in the trace format.
    #[arg(long)]
    pub trace_out: Option<PathBuf>,
    #[arg(long)]
    pub trajectories_out: Option<PathBuf>,
    #[arg(long)]
    pub classifier_out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct AnalyzeArgs {
    #[arg(long)]
    pub trace: PathBuf,
    #[arg(long)]
    pub kind: String,
    #[arg(long, default_value_t = 250)]
    pub bootstrap: usize,
    /// Required when bootstrapping.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value_t = 30.0)]
    pub cutoff_us: f64,
    #[arg(long, default_value_t = 0.05)]
    pub quantile: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct CampaignArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub resume: bool,
    #[arg(long)]
    pub stop_after: Option<usize>,
}

#[derive(Args, Debug)]
pub struct AllanArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// logical, d_mode or q_mode; defaults to the first in the file.
    #[arg(long)]
    pub source: Option<String>,
    /// Use σ = sqrt(2 ln2 A) + sqrt(B/2τ) instead of adding variances.
    #[arg(long)]
    pub linear_sum: bool,
    #[arg(long)]
    pub fit_out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct PsdArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub source: Option<String>,
    #[arg(long)]
    pub segment: Option<usize>,
    #[arg(long)]
    pub fit_out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SummarizeArgs {
    /// metrics.csv, or a campaign archive directory.
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Write the table here as well as to stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = ddq_core::campaign::DEFAULT_MOVING_WINDOW)]
    pub window: usize,
}

pub struct Globals {
    pub force: bool,
    pub emit_plot_data: bool,
    pub argv: Vec<String>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: thread pool: {e}");
            return ExitCode::from(2);
        }
    }
    let g = Globals {
        force: cli.force,
        emit_plot_data: cli.emit_plot_data,
        argv: std::env::args().collect(),
    };
    let result = match cli.command {
        Command::SimShots(a) => commands::sim_shots(&a, &g),
        Command::Analyze(a) => commands::analyze(&a, &g),
        Command::Campaign(a) => commands::campaign(&a, &g),
        Command::Allan(a) => commands::allan(&a, &g),
        Command::Psd(a) => commands::psd(&a, &g),
        Command::Summarize(a) => commands::summarize(&a, &g),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if let CliError::NotConverged { details, .. } = &e {
                eprintln!("{details}");
            }
            ExitCode::from(e.exit_code())
        }
    }
}
