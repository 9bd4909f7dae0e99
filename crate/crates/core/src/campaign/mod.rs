//! Long-running, reproducible monitoring campaigns over one or more devices.

pub mod config;
pub mod run;
pub mod series;

pub use config::{
    config_hash, sha256_hex, CampaignConfig, CampaignDevice, DelayGrids, DeviceRef, LogicalExperiment,
    PhysicalReference, ReadoutSettings,
};
pub use run::{
    persistent_offsets, run_campaign, run_campaign_with, schedule, trace_file_name, CampaignManifest,
    CampaignOptions, CampaignOutcome, Checkpoint, TraceSlot, COMMAND_FILE, METRICS_FILE, SERIES_DIR, TRACES_DIR,
};
pub use series::{
    display_label, format_median_table, moving_average, summarize, summarize_series, BoxStats, MetricRecord,
    MetricSeries, SummaryRow, DEFAULT_MOVING_WINDOW, METRICS_HEADER,
};
