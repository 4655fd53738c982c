//! Experiments, registered by name and selected at run time.

mod bound_check;
mod deep_linear;
mod f2_local;
mod quadratic;
mod relu;
mod sweep;

use std::path::PathBuf;

use heavyball::momentum::{step_form, StepForm};

use crate::config::{ExperimentKind, RunConfig};
use crate::error::{CliError, Result};
use crate::output::{metrics_json, sha256_hex, unix_seconds, FileEntry, Manifest, Outcome, OutputDir};

pub use bound_check::BoundCheck;
pub use deep_linear::DeepLinear;
pub use f2_local::F2Local;
pub use quadratic::Quadratic;
pub use relu::Relu;
pub use sweep::Sweep;

/// Everything an experiment may read while running.
#[derive(Debug, Clone, Copy)]
pub struct RunContext<'a> {
    pub config: &'a RunConfig,
    /// Worker threads available to experiments that fan out.
    pub workers: usize,
}

pub trait Experiment: Send + Sync {
    fn kind(&self) -> ExperimentKind;

    /// Rejects an invalid configuration before anything is written.
    fn check(&self, _config: &RunConfig) -> Result<()> {
        Ok(())
    }

    /// Writes the experiment's files into `out` and reports its status.
    fn run(&self, ctx: RunContext<'_>, out: &mut OutputDir) -> Result<Outcome>;
}

static REGISTRY: [&dyn Experiment; 6] = [&Quadratic, &F2Local, &Relu, &DeepLinear, &BoundCheck, &Sweep];

pub fn registry() -> &'static [&'static dyn Experiment] {
    &REGISTRY
}

pub fn lookup(kind: ExperimentKind) -> &'static dyn Experiment {
    *REGISTRY.iter().find(|e| e.kind() == kind).expect("every experiment kind is registered")
}

/// A finished run: its directory, outcome and every file it produced.
#[derive(Debug, Clone)]
pub struct RunRecord {
    pub dir: PathBuf,
    pub outcome: Outcome,
    /// Includes `manifest.json`.
    pub files: Vec<FileEntry>,
}

/// Runs a resolved configuration into its output directory, echoing the
/// configuration first and writing the manifest last.
pub fn execute(config: &RunConfig, workers: usize) -> Result<RunRecord> {
    let experiment = lookup(config.experiment);
    experiment.check(config)?;
    let started = unix_seconds();
    let dir = config.output_dir();
    let mut out = OutputDir::create(&dir)?;
    let echo = config.to_toml()?;
    out.text("config.toml", &echo)?;
    let outcome = experiment.run(RunContext { config, workers }, &mut out)?;
    let manifest = Manifest {
        experiment: config.experiment.name(),
        software_version: env!("CARGO_PKG_VERSION"),
        config_sha256: sha256_hex(echo.as_bytes()),
        seed: config.seed,
        started_unix: started,
        finished_unix: unix_seconds(),
        status: outcome.status,
        metrics: metrics_json(&outcome.metrics),
        files: out.files(),
    };
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    std::fs::write(dir.join("manifest.json"), &text)?;
    let mut files = out.files().to_vec();
    files.push(FileEntry { path: "manifest.json".into(), sha256: sha256_hex(text.as_bytes()) });
    Ok(RunRecord { dir, outcome, files })
}

pub(crate) fn resolve_form(name: &str) -> Result<&'static dyn StepForm> {
    step_form(name).ok_or_else(|| CliError::Config(format!("unknown update form `{name}`; expected `v1` or `v2`")))
}

/// A Python list literal of file names.
pub(crate) fn python_list(files: &[String]) -> String {
    let quoted: Vec<String> = files.iter().map(|f| format!("    {f:?},")).collect();
    format!("[\n{}\n]", quoted.join("\n"))
}

/// Shared preamble of the generated matplotlib scripts.
pub(crate) const PLOT_PREAMBLE: &str = "\
# Reads only files listed in manifest.json. Loss and residual axes are drawn
# on a log scale.
import csv
import os
import sys

import matplotlib
matplotlib.use(\"Agg\")
import matplotlib.pyplot as plt

HERE = os.path.dirname(os.path.abspath(__file__))


def read_csv(name):
    with open(os.path.join(HERE, name), newline=\"\") as f:
        rows = list(csv.DictReader(f))
    return {k: [float(r[k]) for r in rows] for k in rows[0]} if rows else {}

";

/// Label used in file names for a float parameter.
pub(crate) fn label(x: f64) -> String {
    heavyball::report::fmt_float(x).replace('.', "p").replace('+', "")
}
