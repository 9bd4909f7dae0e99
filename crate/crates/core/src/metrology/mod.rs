//! Error-detected coherence metrology: postselection, fits, bootstrap bounds.

pub mod bootstrap;
pub mod fits;
pub mod lm;
pub mod trace;

pub use bootstrap::{attach_bounds, bootstrap_bounds, quantile_sorted, BootstrapBounds, DEFAULT_QUANTILE, DEFAULT_RESAMPLES};
pub use fits::{
    fit_erasure, fit_exp_decay, fit_linear_short, fit_ramsey, fit_signal, reciprocal_lifetime, FitModel, FitParam,
    FitResult, DEFAULT_LINEAR_CUTOFF_US,
};
pub use lm::{levenberg_marquardt, numeric_jacobian, LmOptions, LmSolution};
pub use trace::{
    bitflip_difference, bitflip_probability, bitflip_probability_signal, echo_contrast_signal, erasure_signal,
    level_fraction_signal, logical_zero_signal, postselect, read_trace_csv, write_trace_csv, Postselected, Signal,
    TraceData, TracePoint,
};
