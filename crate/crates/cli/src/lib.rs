//! Experiment driver for the `dpdlab` command-line tool.
//!
//! A run reads a TOML [`config::ExperimentConfig`], trains the selected
//! predistortion algorithms on a shared excitation and PA bank, and writes
//! coefficients, telemetry, metrics, spectra and an EVM summary table.

pub mod config;
pub mod run;

pub use config::{ExperimentConfig, Issue};
pub use run::{complexity_table, run_experiment, Overrides, RunError, RunSummary};

/// Process exit codes.
pub mod exit {
    pub const OK: u8 = 0;
    pub const CONFIG: u8 = 1;
    pub const DIVERGED: u8 = 2;
}
