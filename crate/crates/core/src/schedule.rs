//! Step-size and momentum schedules and the envelopes they come with.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::momentum::HyperParams;
use crate::spectral::{admissible_beta_range, c0_constant, is_admissible, BoundConstants, SpectrumSummary};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub name: &'static str,
    pub hp: HyperParams,
    pub bounds: BoundConstants,
    pub kappa: f64,
}

impl Schedule {
    /// Rate `1 − 1/(2√κ)` and multiplier `4√κ` for an unperturbed recursion.
    pub fn quadratic_envelope(&self) -> (f64, f64) {
        let r = self.kappa.sqrt();
        (1.0 - 1.0 / (2.0 * r), 4.0 * r)
    }

    /// Rate `1 − 1/(4√κ)` and multiplier `8√κ` for a perturbed recursion.
    pub fn perturbed_envelope(&self) -> (f64, f64) {
        let r = self.kappa.sqrt();
        (1.0 - 1.0 / (4.0 * r), 8.0 * r)
    }

    pub fn gradient_descent(&self) -> HyperParams {
        self.hp.without_momentum()
    }
}

fn require_finite_kappa(spectrum: &SpectrumSummary) -> Result<f64> {
    if !spectrum.is_strongly_convex() || !spectrum.kappa.is_finite() {
        return Err(Error::Validation(format!(
            "schedule needs lambda_min > 0, got spectrum [{}, {}]",
            spectrum.lambda_min, spectrum.lambda_max
        )));
    }
    Ok(spectrum.kappa)
}

/// `η = 1/λ_max`, `β = (1 − 1/(2√κ))²`, with `θ = √β + ¼√(ηλ_min)` recorded.
pub fn accelerated_schedule(name: &'static str, spectrum: &SpectrumSummary) -> Result<Schedule> {
    let kappa = require_finite_kappa(spectrum)?;
    let eta = 1.0 / spectrum.lambda_max;
    let beta = (1.0 - 1.0 / (2.0 * kappa.sqrt())).powi(2);
    let hp = HyperParams::new(eta, beta)?;
    let bounds = c0_constant(eta, beta, spectrum).with_accelerated_theta(eta, spectrum.lambda_min);
    Ok(Schedule { name, hp, bounds, kappa })
}

/// The accelerated schedule for strongly convex quadratics.
pub fn stc_schedule(spectrum: &SpectrumSummary) -> Result<Schedule> {
    accelerated_schedule("accelerated", spectrum)
}

/// `η = 4/(√μ + √α)²`, `β = (1 − 2/(√κ+1))² + margin`.
///
/// Without the margin `β` sits exactly on the admissibility boundary at both
/// spectrum ends and `C₀` is infinite.
pub fn polyak_schedule(spectrum: &SpectrumSummary, beta_margin: f64) -> Result<Schedule> {
    let kappa = require_finite_kappa(spectrum)?;
    if !(beta_margin > 0.0) {
        return Err(Error::Validation(format!("beta margin must be positive, got {beta_margin}")));
    }
    let eta = 4.0 / (spectrum.lambda_min.sqrt() + spectrum.lambda_max.sqrt()).powi(2);
    let beta = (1.0 - 2.0 / (kappa.sqrt() + 1.0)).powi(2) + beta_margin;
    if beta > 1.0 {
        return Err(Error::Validation(format!("beta margin {beta_margin} pushes beta to {beta} > 1")));
    }
    let hp = HyperParams::new(eta, beta)?;
    let (lower, _) = admissible_beta_range(eta, spectrum);
    if !is_admissible(beta, lower) {
        return Err(Error::Inadmissible { beta, lower });
    }
    Ok(Schedule { name: "polyak", hp, bounds: c0_constant(eta, beta, spectrum), kappa })
}

/// `1 − 2/(√κ+1)`, the asymptotic contraction of the tuned schedule.
pub fn polyak_rate(kappa: f64) -> f64 {
    1.0 - 2.0 / (kappa.sqrt() + 1.0)
}
