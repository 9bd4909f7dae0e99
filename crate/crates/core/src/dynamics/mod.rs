//! Population jumps and phase evolution on the six-level ladder.

pub mod noise;
pub mod rates;
pub mod sequence;
pub mod trajectory;

pub use noise::{synthesize_noise, Coupling, ModeOffsets, NoiseKind, NoiseProcess};
pub use rates::{build_rate_matrix, populations_of, propagate_exact, Populations, RateMatrix};
pub use sequence::{
    ramsey_phase, ExperimentKind, Frame, Preparation, PulseSequence, SequenceElement, DEFAULT_RAMSEY_DETUNING_HZ,
};
pub use trajectory::{
    sample_trajectory, shot_rng, write_indexed_trajectory_csv, write_trajectory_csv, TrajectoryEngine, TrajectoryOutcome, DEFAULT_NOISE_GRID,
};
