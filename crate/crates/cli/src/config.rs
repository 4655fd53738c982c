//! Run configuration: a strict TOML document with one optional section per
//! experiment. Unknown keys are rejected.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Quadratic,
    F2Local,
    Relu,
    DeepLinear,
    BoundCheck,
    Sweep,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Quadratic => "quadratic",
            ExperimentKind::F2Local => "f2-local",
            ExperimentKind::Relu => "relu",
            ExperimentKind::DeepLinear => "deep-linear",
            ExperimentKind::BoundCheck => "bound-check",
            ExperimentKind::Sweep => "sweep",
        }
    }

    /// Default horizon `T` (the power horizon `K` for `bound-check`).
    pub fn default_iterations(self) -> usize {
        match self {
            ExperimentKind::F2Local | ExperimentKind::BoundCheck => 300,
            ExperimentKind::Relu | ExperimentKind::DeepLinear => 500,
            ExperimentKind::Quadratic | ExperimentKind::Sweep => 1000,
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadraticSettings {
    #[serde(default = "QuadraticSettings::default_kappas")]
    pub kappas: Vec<f64>,
    #[serde(default = "default_five")]
    pub seeds: usize,
    #[serde(default = "default_twenty")]
    pub dim: usize,
    #[serde(default = "default_form")]
    pub form: String,
    /// Relative distance `‖w_t − w*‖ / ‖w_0 − w*‖` for the iteration counts.
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    /// Cap on the iteration counts, independent of the trace horizon.
    #[serde(default = "default_count_cap")]
    pub count_cap: usize,
}

impl QuadraticSettings {
    fn default_kappas() -> Vec<f64> {
        vec![1.0, 4.0, 25.0, 100.0, 400.0]
    }
}

impl Default for QuadraticSettings {
    fn default() -> Self {
        Self {
            kappas: Self::default_kappas(),
            seeds: 5,
            dim: 20,
            form: default_form(),
            tolerance: default_tolerance(),
            count_cap: default_count_cap(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct F2LocalSettings {
    #[serde(default = "F2LocalSettings::default_kappas")]
    pub kappas: Vec<f64>,
    #[serde(default = "default_three")]
    pub seeds: usize,
    #[serde(default = "default_ten")]
    pub dim: usize,
    /// Start distance as a fraction of the local radius.
    #[serde(default = "F2LocalSettings::default_fraction")]
    pub fraction: f64,
    /// Size of the non-quadratic part, in `[0, 1]`.
    #[serde(default = "F2LocalSettings::default_strength")]
    pub strength: f64,
    #[serde(default = "default_form")]
    pub form: String,
}

impl F2LocalSettings {
    fn default_kappas() -> Vec<f64> {
        vec![1.0, 4.0, 25.0]
    }
    fn default_fraction() -> f64 {
        0.9
    }
    fn default_strength() -> f64 {
        heavyball::quadratic::DEFAULT_F2_STRENGTH
    }
}

impl Default for F2LocalSettings {
    fn default() -> Self {
        Self {
            kappas: Self::default_kappas(),
            seeds: 3,
            dim: 10,
            fraction: Self::default_fraction(),
            strength: Self::default_strength(),
            form: default_form(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReluSettings {
    #[serde(default = "default_five")]
    pub n: usize,
    #[serde(default = "default_ten")]
    pub d: usize,
    #[serde(default = "ReluSettings::default_width")]
    pub m: usize,
    #[serde(default = "default_form")]
    pub form: String,
    #[serde(default = "default_tolerance")]
    pub loss_target: f64,
}

impl ReluSettings {
    fn default_width() -> usize {
        1000
    }
}

impl Default for ReluSettings {
    fn default() -> Self {
        Self { n: 5, d: 10, m: Self::default_width(), form: default_form(), loss_target: default_tolerance() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeepLinearSettings {
    #[serde(default = "default_twenty")]
    pub d: usize,
    #[serde(default = "default_twenty")]
    pub d_y: usize,
    #[serde(default = "DeepLinearSettings::default_width")]
    pub m: usize,
    #[serde(default = "DeepLinearSettings::default_depth")]
    pub depth: usize,
    #[serde(default = "default_five")]
    pub n: usize,
    #[serde(default = "default_form")]
    pub form: String,
    /// Stop once the loss falls below this value; absent runs the full horizon.
    #[serde(default)]
    pub stop_below: Option<f64>,
    /// Every how many steps the product singular values are sampled.
    #[serde(default = "DeepLinearSettings::default_stride")]
    pub singular_stride: usize,
    #[serde(default = "default_tolerance")]
    pub loss_target: f64,
}

impl DeepLinearSettings {
    fn default_width() -> usize {
        50
    }
    fn default_depth() -> usize {
        100
    }
    fn default_stride() -> usize {
        50
    }
}

impl Default for DeepLinearSettings {
    fn default() -> Self {
        Self {
            d: 20,
            d_y: 20,
            m: Self::default_width(),
            depth: Self::default_depth(),
            n: 5,
            form: default_form(),
            stop_below: None,
            singular_stride: Self::default_stride(),
            loss_target: default_tolerance(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StartKind {
    /// `v₀ = [ξ; ξ]`, the start every momentum run actually uses.
    Equal,
    /// A generic Gaussian `v₀ ∈ ℝ^{2n₀}`.
    Gaussian,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundCheckSettings {
    #[serde(default = "BoundCheckSettings::default_sizes")]
    pub sizes: Vec<usize>,
    #[serde(default = "default_twenty")]
    pub seeds: usize,
    #[serde(default = "BoundCheckSettings::default_max_kappa")]
    pub max_kappa: f64,
    #[serde(default = "BoundCheckSettings::default_start")]
    pub start: StartKind,
}

impl BoundCheckSettings {
    fn default_sizes() -> Vec<usize> {
        vec![1, 2, 5, 10]
    }
    fn default_max_kappa() -> f64 {
        1e3
    }
    fn default_start() -> StartKind {
        StartKind::Equal
    }
}

impl Default for BoundCheckSettings {
    fn default() -> Self {
        Self {
            sizes: Self::default_sizes(),
            seeds: 20,
            max_kappa: Self::default_max_kappa(),
            start: Self::default_start(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSettings {
    /// The experiment run in every cell.
    pub experiment: ExperimentKind,
    /// Replicates per axis point, each with its own derived seed.
    #[serde(default = "default_one")]
    pub seeds: usize,
    /// Condition numbers (`quadratic`, `f2-local`).
    #[serde(default)]
    pub kappa: Vec<f64>,
    /// Hidden widths (`relu`, `deep-linear`).
    #[serde(default)]
    pub width: Vec<usize>,
    /// Depths (`deep-linear`).
    #[serde(default)]
    pub depth: Vec<usize>,
    /// Largest number of cells a sweep may expand to.
    #[serde(default = "SweepSettings::default_max_cells")]
    pub max_cells: usize,
}

impl SweepSettings {
    fn default_max_cells() -> usize {
        256
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub experiment: ExperimentKind,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iterations: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quadratic: Option<QuadraticSettings>,
    #[serde(default, rename = "f2-local", skip_serializing_if = "Option::is_none")]
    pub f2_local: Option<F2LocalSettings>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub relu: Option<ReluSettings>,
    #[serde(default, rename = "deep-linear", skip_serializing_if = "Option::is_none")]
    pub deep_linear: Option<DeepLinearSettings>,
    #[serde(default, rename = "bound-check", skip_serializing_if = "Option::is_none")]
    pub bound_check: Option<BoundCheckSettings>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSettings>,
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
}

fn default_one() -> usize {
    1
}
fn default_three() -> usize {
    3
}
fn default_five() -> usize {
    5
}
fn default_ten() -> usize {
    10
}
fn default_twenty() -> usize {
    20
}
fn default_form() -> String {
    "v2".into()
}
fn default_tolerance() -> f64 {
    1e-8
}
fn default_count_cap() -> usize {
    100_000
}

impl RunConfig {
    pub fn empty(experiment: ExperimentKind) -> Self {
        Self {
            experiment,
            seed: 0,
            iterations: None,
            output_dir: None,
            quadratic: None,
            f2_local: None,
            relu: None,
            deep_linear: None,
            bound_check: None,
            sweep: None,
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    fn sections(&self) -> Vec<ExperimentKind> {
        let mut present = Vec::new();
        let flags = [
            (self.quadratic.is_some(), ExperimentKind::Quadratic),
            (self.f2_local.is_some(), ExperimentKind::F2Local),
            (self.relu.is_some(), ExperimentKind::Relu),
            (self.deep_linear.is_some(), ExperimentKind::DeepLinear),
            (self.bound_check.is_some(), ExperimentKind::BoundCheck),
            (self.sweep.is_some(), ExperimentKind::Sweep),
        ];
        for (on, kind) in flags {
            if on {
                present.push(kind);
            }
        }
        present
    }

    /// Checks the document against the subcommand, applies overrides and
    /// fills every default so the result is self-describing.
    pub fn resolve(mut self, command: ExperimentKind, overrides: &Overrides) -> Result<Self> {
        if self.experiment != command {
            return Err(CliError::Config(format!(
                "config is for experiment `{}` but the command is `{command}`",
                self.experiment
            )));
        }
        let allowed: Vec<ExperimentKind> = match (&self.sweep, command) {
            (Some(s), ExperimentKind::Sweep) => vec![ExperimentKind::Sweep, s.experiment],
            _ => vec![command],
        };
        if let Some(extra) = self.sections().into_iter().find(|k| !allowed.contains(k)) {
            return Err(CliError::Config(format!("section [{extra}] does not apply to experiment `{command}`")));
        }
        if let Some(seed) = overrides.seed {
            self.seed = seed;
        }
        if let Some(dir) = &overrides.output_dir {
            self.output_dir = Some(dir.clone());
        }
        let target = match command {
            ExperimentKind::Sweep => {
                let sweep = self
                    .sweep
                    .as_ref()
                    .ok_or_else(|| CliError::Config("experiment `sweep` needs a [sweep] section".into()))?;
                if sweep.experiment == ExperimentKind::Sweep || sweep.experiment == ExperimentKind::BoundCheck {
                    return Err(CliError::Config(format!("experiment `{}` cannot be swept", sweep.experiment)));
                }
                sweep.experiment
            }
            other => other,
        };
        self.iterations.get_or_insert(target.default_iterations());
        self.output_dir.get_or_insert_with(|| PathBuf::from("runs").join(command.name()));
        match target {
            ExperimentKind::Quadratic => {
                self.quadratic.get_or_insert_with(Default::default);
            }
            ExperimentKind::F2Local => {
                self.f2_local.get_or_insert_with(Default::default);
            }
            ExperimentKind::Relu => {
                self.relu.get_or_insert_with(Default::default);
            }
            ExperimentKind::DeepLinear => {
                self.deep_linear.get_or_insert_with(Default::default);
            }
            ExperimentKind::BoundCheck => {
                self.bound_check.get_or_insert_with(Default::default);
            }
            ExperimentKind::Sweep => unreachable!(),
        }
        Ok(self)
    }

    pub fn iterations(&self) -> usize {
        self.iterations.unwrap_or_else(|| self.experiment.default_iterations())
    }

    pub fn output_dir(&self) -> PathBuf {
        self.output_dir.clone().unwrap_or_else(|| PathBuf::from("runs").join(self.experiment.name()))
    }
}

/// Errors unless `value` is positive and finite.
pub fn require_positive(name: &str, value: f64) -> Result<()> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(CliError::Config(format!("`{name}` must be positive and finite, got {value}")))
    }
}

/// Errors unless `value` is at least one.
pub fn require_count(name: &str, value: usize) -> Result<()> {
    if value >= 1 {
        Ok(())
    } else {
        Err(CliError::Config(format!("`{name}` must be at least 1")))
    }
}
