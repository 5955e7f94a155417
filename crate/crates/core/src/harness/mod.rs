//! Experiment runner: configuration, single runs, sweeps and device traces.

pub mod config;
pub mod curves;
pub mod run;
pub mod sweep;

pub use config::{ExperimentConfig, Preset, DATA_DIR_ENV};
pub use curves::{calibration_run, device_curves, write_device_curves};
pub use run::{read_records, run_experiment, run_experiment_with, RunRecord};
pub use sweep::{run_sweep, SweepAxis};
