//! Frequency-stability analysis: Allan deviation and Welch spectra.

pub mod allan;
pub mod psd;
pub mod series;

pub use allan::{
    allan_curve, fit_allan_model, fit_allan_model_with, flag_bumps, octave_factors, overlapping_allan,
    write_allan_csv, AllanBump, AllanFit, AllanModelForm, AllanPoint,
};
pub use psd::{
    default_segment_len, fit_psd_model, log_log_slope, welch, welch_psd, write_psd_csv, Psd, PsdFit,
};
pub use series::{
    read_series_csv, synthesize_series, write_series_csv, FrequencySeries, SeriesSource, MIN_SAMPLES, SERIES_HEADER,
};
