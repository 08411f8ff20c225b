//! Experiment harness for the `mfgan_core` laboratory.
//!
//! Each subcommand resolves an [`ExperimentConfig`] (defaults, an optional
//! `key = value` file, command-line overrides), writes a run manifest, runs
//! and emits `metrics.csv` plus a plain-text summary. Identical configs
//! produce byte-identical metrics.

pub mod config;
pub mod error;
pub mod metrics;
pub mod run;

pub use config::{Command, ExperimentConfig, Key, Kind, Value, OUT_DIR_ENV};
pub use error::{CliError, Result};
pub use metrics::{format_number, Cell, MetricsRecord};
pub use run::{manifest_text, run_experiment, RunReport, CHECKPOINT_DIR, MANIFEST_FILE, METRICS_FILE, SUMMARY_FILE};
