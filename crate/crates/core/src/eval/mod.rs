//! Experiment runner: configs, repeated runs, classical baselines, sweeps
//! and their output files.

pub mod baseline;
pub mod config;
pub mod experiment;
pub mod report;
pub mod sweep;

pub use baseline::{classical_baseline, BaselineGrid, BaselineOutcome, ClassicalKernelKind};
pub use config::{DatasetSpec, ExperimentConfig};
pub use experiment::{run_experiment, ExperimentOutcome, ResultRow};
pub use sweep::{run_sweep, SweepConfig};
