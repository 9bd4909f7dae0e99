//! Dispersive IQ readout and Gaussian-mixture state assignment.

pub mod gmm;
pub mod model;
pub mod shots;

pub use gmm::{classify, confusion_matrix, fit_gmm, fit_gmm_with, GmmClassifier, GmmFit, GmmOptions};
pub use model::{generate_iq, readout_level, readout_t1_us, Iq, ReadoutModel};
pub use shots::{read_shots_csv, write_shots_csv, ShotRecord};
