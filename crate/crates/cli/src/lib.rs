//! Experiment runner for heavy-ball momentum certification.

pub mod config;
pub mod error;
pub mod experiments;
pub mod output;

use std::path::PathBuf;

use config::{ExperimentKind, Overrides, RunConfig};
use error::Result;
use experiments::RunRecord;

/// Loads (or defaults) the configuration for `command`, applies overrides
/// and runs it.
pub fn run_command(
    command: ExperimentKind,
    config_path: Option<&PathBuf>,
    overrides: &Overrides,
    workers: usize,
) -> Result<RunRecord> {
    let raw = match config_path {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::empty(command),
    };
    let config = raw.resolve(command, overrides)?;
    experiments::execute(&config, workers)
}
