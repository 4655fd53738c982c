//! Generic recorder and certifier for the perturbed stacked recursion
//!
//! ```text
//! [ξ_{t+1}; ξ_t] = A [ξ_t; ξ_{t-1}] + [φ_t; 0]
//! ```
//!
//! shared by every problem family. Envelopes have the form
//! `(√β + 1_φ C₂)^t (C₀ + 1_φ C₁) ‖[ξ₀; ξ₋₁]‖`.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::stacked_norm;
use crate::momentum::HyperParams;
use crate::spectral::{BoundConstants, DynamicsMatrix, CERT_SLACK};

/// Noise floor, relative to the initial stacked norm, for residuals formed
/// by cancellation of order-one quantities.
pub const CANCELLATION_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Realization {
    Quadratic,
    SmoothStronglyConvex,
    Relu,
    DeepLinear,
}

impl Realization {
    pub fn name(self) -> &'static str {
        match self {
            Realization::Quadratic => "quadratic",
            Realization::SmoothStronglyConvex => "smooth-strongly-convex",
            Realization::Relu => "relu",
            Realization::DeepLinear => "deep-linear",
        }
    }

    /// Whether the realization's residual recursion carries a perturbation.
    pub fn has_phi(self) -> bool {
        !matches!(self, Realization::Quadratic)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceEntry {
    pub t: usize,
    pub xi: DVector<f64>,
    /// `‖[ξ_t; ξ_{t-1}]‖` with `ξ_{-1} = ξ_0`.
    pub stacked_norm: f64,
    /// Perturbation driving the step `t → t+1`, when recorded.
    pub phi: Option<DVector<f64>>,
    pub phi_norm: Option<f64>,
    /// Filled by [`ResidualTrace::with_envelope`]; NaN until then.
    pub envelope: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ResidualTrace {
    pub n0: usize,
    pub entries: Vec<TraceEntry>,
}

impl ResidualTrace {
    pub fn new(n0: usize) -> Self {
        Self { n0, entries: Vec::new() }
    }

    /// Appends `ξ_t` for the next `t`.
    pub fn push(&mut self, xi: DVector<f64>) -> Result<()> {
        if xi.len() != self.n0 {
            return Err(Error::Validation(format!("residual has length {}, trace expects {}", xi.len(), self.n0)));
        }
        let stacked = match self.entries.last() {
            Some(prev) => stacked_norm(&xi, &prev.xi),
            None => stacked_norm(&xi, &xi),
        };
        self.entries.push(TraceEntry {
            t: self.entries.len(),
            xi,
            stacked_norm: stacked,
            phi: None,
            phi_norm: None,
            envelope: f64::NAN,
            ratio: f64::NAN,
        });
        Ok(())
    }

    /// Records `φ_t` for an already pushed `t`.
    pub fn set_phi(&mut self, t: usize, phi: DVector<f64>) -> Result<()> {
        let n0 = self.n0;
        let entry = self
            .entries
            .get_mut(t)
            .ok_or_else(|| Error::Validation(format!("no trace entry for t = {t}")))?;
        if phi.len() != n0 {
            return Err(Error::Validation(format!("perturbation has length {}, trace expects {n0}", phi.len())));
        }
        entry.phi_norm = Some(phi.norm());
        entry.phi = Some(phi);
        Ok(())
    }

    pub fn from_residuals(residuals: impl IntoIterator<Item = DVector<f64>>) -> Result<Self> {
        let mut iter = residuals.into_iter().peekable();
        let n0 = iter.peek().map_or(0, |x| x.len());
        let mut trace = Self::new(n0);
        for xi in iter {
            trace.push(xi)?;
        }
        Ok(trace)
    }

    pub fn initial_stacked_norm(&self) -> f64 {
        self.entries.first().map_or(0.0, |e| e.stacked_norm)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Copy with `envelope` and `ratio` filled from `env`.
    pub fn with_envelope(&self, env: &EnvelopeParams) -> Self {
        let s0 = self.initial_stacked_norm();
        let mut out = self.clone();
        for e in &mut out.entries {
            e.envelope = env.value(e.t, s0);
            e.ratio = ratio(e.stacked_norm, e.envelope);
        }
        out
    }
}

fn ratio(value: f64, bound: f64) -> f64 {
    if value == 0.0 {
        0.0
    } else {
        value / bound
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeParams {
    pub realization: Realization,
    pub c0: f64,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub nu: f64,
    pub indicator_phi: bool,
    /// `√β + 1_φ C₂`.
    pub rate: f64,
    /// `C₀ + 1_φ C₁`.
    pub multiplier: f64,
    /// Set when `rate = 1 − ¼√(ηλ)`.
    pub theta: Option<f64>,
    /// Whether the run satisfied the hypotheses under which the envelope is
    /// guaranteed. `false` marks the certificate as an empirical observation.
    pub preconditions_met: bool,
    /// Iterations whose envelope value falls below this are not evaluated:
    /// the residual cannot be resolved there in double precision.
    pub noise_floor: f64,
}

impl EnvelopeParams {
    /// An envelope with explicitly stated rate and multiplier, bypassing the
    /// meta constants.
    pub fn stated(realization: Realization, rate: f64, multiplier: f64) -> Self {
        Self {
            realization,
            c0: multiplier,
            c1: 0.0,
            c2: 0.0,
            c3: 0.0,
            nu: 0.0,
            indicator_phi: false,
            rate,
            multiplier,
            theta: None,
            preconditions_met: true,
            noise_floor: 0.0,
        }
    }

    pub fn with_noise_floor(mut self, floor: f64) -> Self {
        self.noise_floor = floor;
        self
    }

    pub fn with_preconditions(mut self, met: bool) -> Self {
        self.preconditions_met = met;
        self
    }

    /// `rate^t · multiplier · s0`.
    pub fn value(&self, t: usize, s0: f64) -> f64 {
        self.rate.powi(t as i32) * self.multiplier * s0
    }

    /// Checks `(√β)^t C₀ + 1_φ rate^t C₃ ≤ rate^t (C₀ + 1_φ C₁)` for
    /// `t = 0..=horizon`.
    pub fn check_consistency(&self, beta: f64, horizon: usize) -> Result<()> {
        let ind = if self.indicator_phi { 1.0 } else { 0.0 };
        let root = beta.sqrt();
        for t in 0..=horizon {
            let ti = t as i32;
            let lhs = root.powi(ti) * self.c0 + ind * self.rate.powi(ti) * self.c3;
            let rhs = self.rate.powi(ti) * (self.c0 + ind * self.c1);
            if lhs > rhs * (1.0 + 1e-12) {
                return Err(Error::Validation(format!(
                    "envelope constants inconsistent at t = {t}: {lhs:e} > {rhs:e}"
                )));
            }
        }
        Ok(())
    }
}

/// Meta envelope constants for `realization`.
///
/// Without a perturbation `C₁ = C₂ = C₃ = 0`. With one, `C₁ = C₃ = C₀`,
/// `C₂ = ¼√(ηλ)` and `ν = 2`, where `λ` is the smallest relevant eigenvalue;
/// `bounds.theta` must then hold `√β + ¼√(ηλ)`.
pub fn make_envelope(
    hp: &HyperParams,
    bounds: &BoundConstants,
    has_phi: bool,
    realization: Realization,
) -> Result<EnvelopeParams> {
    let c0 = bounds.require_c0()?;
    let root = hp.beta.sqrt();
    if !has_phi {
        return Ok(EnvelopeParams {
            realization,
            c0,
            c1: 0.0,
            c2: 0.0,
            c3: 0.0,
            nu: 0.0,
            indicator_phi: false,
            rate: root,
            multiplier: c0,
            theta: None,
            preconditions_met: true,
            noise_floor: 0.0,
        });
    }
    let theta = bounds
        .theta
        .ok_or_else(|| Error::Validation("perturbed envelope needs theta = sqrt(beta) + sqrt(eta*lambda)/4".into()))?;
    let c2 = theta - root;
    Ok(EnvelopeParams {
        realization,
        c0,
        c1: c0,
        c2,
        c3: c0,
        nu: 2.0,
        indicator_phi: true,
        rate: root + c2,
        multiplier: 2.0 * c0,
        theta: Some(theta),
        preconditions_met: true,
        noise_floor: 0.0,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceReport {
    pub realization: Realization,
    pub rate: f64,
    pub multiplier: f64,
    pub passed: bool,
    pub max_ratio: f64,
    pub first_violation: Option<usize>,
    pub preconditions_met: bool,
    /// Number of leading iterations above the noise floor that were checked.
    pub evaluated: usize,
    #[serde(skip)]
    pub envelope: Vec<f64>,
    #[serde(skip)]
    pub ratios: Vec<f64>,
}

/// Compares every stacked norm against the envelope with relative slack
/// [`CERT_SLACK`].
pub fn certify_trace(trace: &ResidualTrace, env: &EnvelopeParams) -> Result<TraceReport> {
    if trace.is_empty() {
        return Err(Error::Validation("cannot certify an empty trace".into()));
    }
    let s0 = trace.initial_stacked_norm();
    let mut envelope = Vec::with_capacity(trace.len());
    let mut ratios = Vec::with_capacity(trace.len());
    let mut first_violation = None;
    let mut evaluated = 0;
    let mut max_ratio = 0.0f64;
    for e in &trace.entries {
        let bound = env.value(e.t, s0);
        let r = ratio(e.stacked_norm, bound);
        if bound >= env.noise_floor {
            evaluated += 1;
            max_ratio = max_ratio.max(r);
            if !(r <= 1.0 + CERT_SLACK) && first_violation.is_none() {
                first_violation = Some(e.t);
            }
        }
        envelope.push(bound);
        ratios.push(r);
    }
    Ok(TraceReport {
        realization: env.realization,
        rate: env.rate,
        multiplier: env.multiplier,
        passed: first_violation.is_none(),
        max_ratio,
        first_violation,
        preconditions_met: env.preconditions_met,
        evaluated,
        envelope,
        ratios,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetReport {
    /// `‖Σ_{s<t} A^{t-s-1} [φ_s; 0]‖` for each evaluated `t`.
    pub lhs: Vec<f64>,
    /// `rate^t · C₃ · ‖[ξ₀; ξ₋₁]‖`.
    pub rhs: Vec<f64>,
    pub max_ratio: f64,
    pub passed: bool,
    /// True when some `φ_s` was missing and the accumulation stopped early.
    pub partial: bool,
}

/// Accumulates the perturbation through `A` and compares it with the budget
/// `rate^t C₃ ‖[ξ₀; ξ₋₁]‖`.
///
/// The budget is scaled by the initial stacked norm so it matches the
/// normalization of the envelope. Iterations below the envelope's noise floor
/// are recorded but not compared.
pub fn perturbation_budget_check(trace: &ResidualTrace, env: &EnvelopeParams, a: &DynamicsMatrix) -> Result<BudgetReport> {
    if a.n0 != trace.n0 {
        return Err(Error::Validation(format!("dynamics block size {} differs from trace dimension {}", a.n0, trace.n0)));
    }
    let s0 = trace.initial_stacked_norm();
    let n = trace.n0;
    let mut acc = DVector::zeros(2 * n);
    let mut lhs = vec![0.0];
    let mut rhs = vec![env.c3 * s0];
    let mut partial = false;
    for t in 1..trace.len() {
        let Some(phi) = trace.entries[t - 1].phi.as_ref() else {
            partial = true;
            break;
        };
        acc = a.apply(&acc);
        let mut top = acc.rows_mut(0, n);
        top += phi;
        lhs.push(acc.norm());
        rhs.push(env.rate.powi(t as i32) * env.c3 * s0);
    }
    let max_ratio = lhs
        .iter()
        .zip(&rhs)
        .enumerate()
        .filter(|(t, _)| env.value(*t, s0) >= env.noise_floor)
        .map(|(_, (&l, &r))| if l == 0.0 { 0.0 } else { l / r })
        .fold(0.0, f64::max);
    Ok(BudgetReport { lhs, rhs, max_ratio, passed: max_ratio <= 1.0 + CERT_SLACK, partial })
}
