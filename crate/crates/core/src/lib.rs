//! Simulation and coherence-metrology toolkit for a dual-rail dimon qubit.

pub mod analysis;
pub mod campaign;
pub mod device;
pub mod dynamics;
pub mod error;
pub mod experiment;
pub mod metrology;
pub mod readout;

pub use error::{Error, FitDiagnostics, Result};
