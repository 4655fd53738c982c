//! One-hidden-layer ReLU network `u(x) = (1/√m) Σ_r a_r σ(⟨w_r, x⟩)` with a
//! frozen output layer, its Gram matrices, and momentum training with
//! residual-dynamics bookkeeping.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::momentum::{HyperParams, Objective, OptimizerState, StepForm};
use crate::report::Table;
use crate::residual::{
    certify_trace, make_envelope, perturbation_budget_check, BudgetReport, EnvelopeParams, Realization,
    ResidualTrace, TraceReport, CANCELLATION_FLOOR,
};
use crate::rng::{derive_seed, gaussian_matrix, rademacher, rng_from_seed};
use crate::schedule::{accelerated_schedule, Schedule};
use crate::spectral::{build_dynamics_matrix, SpectrumSummary};

/// Slack on the unit-norm input assumption.
const NORM_TOL: f64 = 1e-12;

/// Attempts at drawing a dataset without parallel inputs.
const MAX_REGENERATIONS: u64 = 64;

#[derive(Debug, Clone, PartialEq)]
pub struct ReluNetwork {
    pub m: usize,
    pub d: usize,
    /// Row `r` is `w_r`.
    pub w: DMatrix<f64>,
    /// Output signs, frozen during training.
    pub a: DVector<f64>,
    w_init: DMatrix<f64>,
}

impl ReluNetwork {
    pub fn new(w: DMatrix<f64>, a: DVector<f64>) -> Result<Self> {
        if w.nrows() != a.len() || w.nrows() == 0 || w.ncols() == 0 {
            return Err(Error::Validation(format!("weights {}x{} do not match {} output signs", w.nrows(), w.ncols(), a.len())));
        }
        if a.iter().any(|&s| s != 1.0 && s != -1.0) {
            return Err(Error::Validation("output signs must be +1 or -1".into()));
        }
        Ok(Self { m: w.nrows(), d: w.ncols(), w_init: w.clone(), w, a })
    }

    pub fn w_init(&self) -> &DMatrix<f64> {
        &self.w_init
    }

    /// Same network with first-layer weights `w`; the initial snapshot is kept.
    pub fn with_weights(&self, w: DMatrix<f64>) -> Self {
        Self { w, ..self.clone() }
    }
}

/// `w_r ~ N(0, I_d)` and `a_r` uniform on `{−1, +1}`.
pub fn init_relu(m: usize, d: usize, seed: u64) -> Result<ReluNetwork> {
    if m == 0 || d == 0 {
        return Err(Error::Validation(format!("need m, d >= 1, got m = {m}, d = {d}")));
    }
    let mut rng = rng_from_seed(seed);
    let w = gaussian_matrix(&mut rng, m, d);
    let a = DVector::from_vec(rademacher(&mut rng, m));
    ReluNetwork::new(w, a)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReluDataset {
    /// Row `i` is `x_i`.
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
}

impl ReluDataset {
    /// Checks `‖x_i‖ ≤ 1` and that no two inputs are parallel.
    pub fn new(x: DMatrix<f64>, y: DVector<f64>) -> Result<Self> {
        if x.nrows() != y.len() {
            return Err(Error::Validation(format!("{} inputs but {} labels", x.nrows(), y.len())));
        }
        let norms: Vec<f64> = x.row_iter().map(|r| r.norm()).collect();
        if let Some((i, n)) = norms.iter().enumerate().find(|(_, &n)| n > 1.0 + NORM_TOL) {
            return Err(Error::Validation(format!("input {i} has norm {n} > 1")));
        }
        for i in 0..x.nrows() {
            for j in 0..i {
                let dot = x.row(i).dot(&x.row(j)).abs();
                if !(dot < norms[i] * norms[j] - NORM_TOL) {
                    return Err(Error::Validation(format!("inputs {j} and {i} are parallel")));
                }
            }
        }
        Ok(Self { x, y })
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }
}

/// Gaussian inputs normalized to the unit sphere and uniform `±1` labels.
///
/// A draw with parallel inputs is discarded and redrawn from the next derived
/// seed; the second return value counts the redraws.
pub fn make_relu_dataset(n: usize, d: usize, seed: u64) -> Result<(ReluDataset, u64)> {
    for attempt in 0..MAX_REGENERATIONS {
        let mut rng = rng_from_seed(derive_seed(seed, attempt));
        let mut x = gaussian_matrix(&mut rng, n, d);
        for mut row in x.row_iter_mut() {
            let norm = row.norm();
            if norm > 0.0 {
                row /= norm;
            }
        }
        let y = DVector::from_vec(rademacher(&mut rng, n));
        if let Ok(data) = ReluDataset::new(x, y) {
            return Ok((data, attempt));
        }
    }
    Err(Error::Validation(format!("no dataset without parallel inputs after {MAX_REGENERATIONS} draws")))
}

/// Pre-activations `⟨w_r, x_i⟩` as an `n × m` matrix.
fn preactivations(w: &DMatrix<f64>, x: &DMatrix<f64>) -> DMatrix<f64> {
    x * w.transpose()
}

/// `1{⟨w_r, x_i⟩ ≥ 0}` as an `n × m` matrix of booleans, row-major by sample.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActivationPattern {
    pub n: usize,
    pub m: usize,
    on: Vec<bool>,
}

impl ActivationPattern {
    pub fn of(net: &ReluNetwork, x: &DMatrix<f64>) -> Self {
        Self::from_preactivations(&preactivations(&net.w, x))
    }

    fn from_preactivations(z: &DMatrix<f64>) -> Self {
        let (n, m) = z.shape();
        let on = (0..n).flat_map(|i| (0..m).map(move |r| (i, r))).map(|(i, r)| z[(i, r)] >= 0.0).collect();
        Self { n, m, on }
    }

    pub fn is_on(&self, i: usize, r: usize) -> bool {
        self.on[i * self.m + r]
    }

    /// Per-sample count of neurons whose activation differs from `other`.
    pub fn flips_against(&self, other: &Self) -> Vec<usize> {
        (0..self.n)
            .map(|i| (0..self.m).filter(|&r| self.is_on(i, r) != other.is_on(i, r)).count())
            .collect()
    }
}

pub fn forward(net: &ReluNetwork, x: &DMatrix<f64>) -> Result<DVector<f64>> {
    if x.ncols() != net.d {
        return Err(Error::Validation(format!("inputs have dimension {}, network expects {}", x.ncols(), net.d)));
    }
    Ok(forward_from(&preactivations(&net.w, x), &net.a))
}

fn forward_from(z: &DMatrix<f64>, a: &DVector<f64>) -> DVector<f64> {
    z.map(|v| if v >= 0.0 { v } else { 0.0 }) * a / (a.len() as f64).sqrt()
}

fn subgradient_from(z: &DMatrix<f64>, a: &DVector<f64>, xi: &DVector<f64>, x: &DMatrix<f64>) -> DMatrix<f64> {
    let (n, m) = z.shape();
    let scale = 1.0 / (m as f64).sqrt();
    // coef[r, i] = a_r (u_i − y_i) 1{z_ir ≥ 0} / √m
    let coef = DMatrix::from_fn(m, n, |r, i| if z[(i, r)] >= 0.0 { a[r] * xi[i] * scale } else { 0.0 });
    coef * x
}

/// Row `r` is `(1/√m) Σ_i (u_i − y_i) a_r 1{⟨w_r, x_i⟩ ≥ 0} x_i`.
pub fn subgradient(net: &ReluNetwork, data: &ReluDataset) -> Result<DMatrix<f64>> {
    let z = preactivations(&net.w, &data.x);
    let xi = forward_from(&z, &net.a) - &data.y;
    Ok(subgradient_from(&z, &net.a, &xi, &data.x))
}

pub fn loss(net: &ReluNetwork, data: &ReluDataset) -> Result<f64> {
    Ok(0.5 * (forward(net, &data.x)? - &data.y).norm_squared())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GramKind {
    EmpiricalAtW,
    EmpiricalAtInit,
    Expected,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GramMatrix {
    pub h: DMatrix<f64>,
    pub spectrum: SpectrumSummary,
    pub kind: GramKind,
}

impl GramMatrix {
    pub fn new(h: DMatrix<f64>, kind: GramKind) -> Result<Self> {
        let spectrum = SpectrumSummary::of_psd(&h)?;
        Ok(Self { h, spectrum, kind })
    }
}

fn row_dot(x: &DMatrix<f64>, i: usize, j: usize) -> f64 {
    (0..x.ncols()).map(|k| x[(i, k)] * x[(j, k)]).sum()
}

fn gram_from_pattern(x: &DMatrix<f64>, pattern: &ActivationPattern) -> DMatrix<f64> {
    let (n, m) = (pattern.n, pattern.m);
    let mut h = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let both = (0..m).filter(|&r| pattern.is_on(i, r) && pattern.is_on(j, r)).count();
            let v = row_dot(x, i, j) * both as f64 / m as f64;
            h[(i, j)] = v;
            h[(j, i)] = v;
        }
    }
    h
}

/// `H_ij = (1/m) x_iᵀx_j · #{r : both activations on}`.
pub fn gram_empirical(net: &ReluNetwork, data: &ReluDataset) -> Result<GramMatrix> {
    let pattern = ActivationPattern::of(net, &data.x);
    let kind = if net.w == net.w_init { GramKind::EmpiricalAtInit } else { GramKind::EmpiricalAtW };
    GramMatrix::new(gram_from_pattern(&data.x, &pattern), kind)
}

/// `H̄_ij = x_iᵀx_j (π − θ_ij) / (2π)`, the expectation of the empirical
/// Gram entry under `w ~ N(0, I)`.
pub fn gram_expected(data: &ReluDataset) -> Result<GramMatrix> {
    let x = &data.x;
    let n = x.nrows();
    let norms: Vec<f64> = (0..n).map(|i| row_dot(x, i, i).sqrt()).collect();
    if let Some(i) = norms.iter().position(|&v| v == 0.0) {
        return Err(Error::Domain(format!("input {i} has zero norm")));
    }
    let h = DMatrix::from_fn(n, n, |i, j| {
        let dot = row_dot(x, i, j);
        let theta = (dot / (norms[i] * norms[j])).clamp(-1.0, 1.0).acos();
        dot * (PI - theta) / (2.0 * PI)
    });
    GramMatrix::new(h, GramKind::Expected)
}

/// `‖H₀ − H̄‖_F` for a freshly initialized width-`m` network.
pub fn gram_concentration_error(data: &ReluDataset, m: usize, seed: u64) -> Result<f64> {
    let net = init_relu(m, data.x.ncols(), seed)?;
    Ok((gram_empirical(&net, data)?.h - gram_expected(data)?.h).norm())
}

/// `η = 1/λ_max(H₀)`, `β = (1 − 1/(2√κ̂))²` with `κ̂ = λ_max(H₀)/λ_min(H₀)`.
pub fn acc_schedule(gram0: &GramMatrix) -> Result<Schedule> {
    if !gram0.spectrum.is_strongly_convex() {
        return Err(Error::Validation("initial Gram matrix is singular".into()));
    }
    accelerated_schedule("acc", &gram0.spectrum)
}

/// Squared loss over the flattened (column-major) first-layer weights.
pub struct ReluObjective<'a> {
    pub a: &'a DVector<f64>,
    pub data: &'a ReluDataset,
    pub d: usize,
}

impl ReluObjective<'_> {
    fn weights(&self, w: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_column_slice(self.a.len(), self.d, w.as_slice())
    }
}

impl Objective for ReluObjective<'_> {
    fn dim(&self) -> usize {
        self.a.len() * self.d
    }

    fn value(&self, w: &DVector<f64>) -> f64 {
        let z = preactivations(&self.weights(w), &self.data.x);
        0.5 * (forward_from(&z, self.a) - &self.data.y).norm_squared()
    }

    fn gradient(&self, w: &DVector<f64>) -> DVector<f64> {
        let z = preactivations(&self.weights(w), &self.data.x);
        let xi = forward_from(&z, self.a) - &self.data.y;
        let g = subgradient_from(&z, self.a, &xi, &self.data.x);
        DVector::from_column_slice(g.as_slice())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReluStep {
    pub t: usize,
    pub loss: f64,
    pub residual_norm: f64,
    pub stacked_norm: f64,
    /// Fraction of the `m·n` activations that differ from initialization.
    pub pattern_changed_fraction: f64,
    pub max_neuron_drift: f64,
    /// `‖H_t − H₀‖_F`.
    pub gram_drift: f64,
    /// `‖η(H₀ − H_t)ξ_t‖`.
    pub iota_norm: f64,
    /// `‖ξ_{t+1} − (I − ηH_t)ξ_t − β(ξ_t − ξ_{t-1})‖`, the part of the
    /// perturbation caused by activation changes; absent at the last step.
    pub pattern_remainder_norm: Option<f64>,
    /// Activations at `t−1`, `t` and `t+1` all agree.
    pub patterns_stable: bool,
}

#[derive(Debug, Clone)]
pub struct ReluRun {
    pub hp: HyperParams,
    pub steps: Vec<ReluStep>,
    /// `ξ_t = u_t − y`, with `φ_t` the full remainder against `H₀`.
    pub trace: ResidualTrace,
    pub gram0: GramMatrix,
    pub grams: Vec<DMatrix<f64>>,
    /// `|S_i^⊥|` at the final iterate: neurons whose activation on `x_i`
    /// differs from initialization.
    pub final_flips: Vec<usize>,
    pub final_network: ReluNetwork,
}

impl ReluRun {
    pub fn final_loss(&self) -> f64 {
        self.steps.last().map_or(f64::NAN, |s| s.loss)
    }
}

/// Trains the first layer for `iterations` steps of `form`.
pub fn train_relu(
    net: &ReluNetwork,
    data: &ReluDataset,
    hp: &HyperParams,
    iterations: usize,
    form: &dyn StepForm,
) -> Result<ReluRun> {
    let (m, d, n) = (net.m, net.d, data.n());
    if data.x.ncols() != d {
        return Err(Error::Validation(format!("inputs have dimension {}, network expects {d}", data.x.ncols())));
    }
    let z0 = preactivations(net.w_init(), &data.x);
    let pattern0 = ActivationPattern::from_preactivations(&z0);
    let gram0 = GramMatrix::new(gram_from_pattern(&data.x, &pattern0), GramKind::EmpiricalAtInit)?;

    let mut state = OptimizerState::new(DVector::from_column_slice(net.w.as_slice()));
    let mut trace = ResidualTrace::new(n);
    let mut steps: Vec<ReluStep> = Vec::with_capacity(iterations + 1);
    let mut grams = Vec::with_capacity(iterations + 1);
    let mut patterns: Vec<ActivationPattern> = Vec::with_capacity(iterations + 1);
    let mut last_flips = vec![0; n];
    loop {
        let t = state.iter;
        let w = DMatrix::from_column_slice(m, d, state.w_curr.as_slice());
        let z = preactivations(&w, &data.x);
        let pattern = ActivationPattern::from_preactivations(&z);
        let xi = forward_from(&z, &net.a) - &data.y;
        let h_t = gram_from_pattern(&data.x, &pattern);
        let flips = pattern.flips_against(&pattern0);
        let drift = (0..m).map(|r| (w.row(r) - net.w_init().row(r)).norm()).fold(0.0, f64::max);
        trace.push(xi.clone())?;
        steps.push(ReluStep {
            t,
            loss: 0.5 * xi.norm_squared(),
            residual_norm: xi.norm(),
            stacked_norm: trace.entries[t].stacked_norm,
            pattern_changed_fraction: flips.iter().sum::<usize>() as f64 / (m * n) as f64,
            max_neuron_drift: drift,
            gram_drift: (&h_t - &gram0.h).norm(),
            iota_norm: ((&gram0.h - &h_t) * &xi).norm() * hp.eta,
            pattern_remainder_norm: None,
            patterns_stable: false,
        });
        last_flips = flips;
        if t > 0 {
            let prev = &trace.entries[t - 1].xi;
            let prev2 = if t >= 2 { &trace.entries[t - 2].xi } else { prev };
            let h_prev: &DMatrix<f64> = &grams[t - 1];
            let linear_h0 = prev - (&gram0.h * prev) * hp.eta + (prev - prev2) * hp.beta;
            let linear_ht = prev - (h_prev * prev) * hp.eta + (prev - prev2) * hp.beta;
            trace.set_phi(t - 1, &xi - linear_h0)?;
            steps[t - 1].pattern_remainder_norm = Some((&xi - linear_ht).norm());
            let before = if t >= 2 { &patterns[t - 2] } else { &patterns[t - 1] };
            steps[t - 1].patterns_stable = *before == patterns[t - 1] && patterns[t - 1] == pattern;
        }
        grams.push(h_t);
        patterns.push(pattern);
        if t == iterations {
            break;
        }
        let grad = subgradient_from(&z, &net.a, &xi, &data.x);
        form.apply(&mut state, &DVector::from_column_slice(grad.as_slice()), hp)?;
    }
    let final_network = net.with_weights(DMatrix::from_column_slice(m, d, state.w_curr.as_slice()));
    Ok(ReluRun { hp: *hp, steps, trace, gram0, grams, final_flips: last_flips, final_network })
}

/// `R = λ / (1024 n C₀)`, the per-neuron drift radius of the analysis.
pub fn relu_drift_radius(lambda: f64, n: usize, c0: f64) -> f64 {
    lambda / (1024.0 * n as f64 * c0)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReluCertificate {
    /// Against `(1 − 1/(4√κ̂))^t 8√κ̂`.
    pub report: TraceReport,
    /// Against the meta envelope `θ^t 2C₀`.
    pub meta_report: TraceReport,
    pub budget: BudgetReport,
    pub kappa_hat: f64,
    pub drift_radius: f64,
    pub max_neuron_drift: f64,
    pub drift_within_radius: bool,
    /// Iterations at which every neuron stayed within the drift radius.
    pub iterations_within_radius: usize,
    /// `‖H_t − H₀‖_F ≤ 2nR` at every iteration within the radius.
    pub gram_drift_bound_holds: bool,
    pub max_pattern_changed_fraction: f64,
    pub final_pattern_changed_fraction: f64,
    /// Steps whose activations agree at `t−1`, `t` and `t+1`.
    pub stable_steps: usize,
    /// `max ‖pattern remainder‖ / ‖ξ_0‖` over stable steps. Exact arithmetic
    /// gives zero.
    pub max_stable_remainder: f64,
    /// The width requirement has an unspecified constant, so this is always
    /// false and the envelope checks are empirical observations.
    pub preconditions_met: bool,
}

pub fn certify_relu_run(run: &ReluRun, schedule: &Schedule) -> Result<ReluCertificate> {
    let (rate, multiplier) = schedule.perturbed_envelope();
    let floor = CANCELLATION_FLOOR * run.trace.initial_stacked_norm();
    let envelope =
        EnvelopeParams::stated(Realization::Relu, rate, multiplier).with_preconditions(false).with_noise_floor(floor);
    let meta = make_envelope(&run.hp, &schedule.bounds, true, Realization::Relu)?
        .with_preconditions(false)
        .with_noise_floor(floor);
    meta.check_consistency(run.hp.beta, run.steps.len())?;
    let report = certify_trace(&run.trace, &envelope)?;
    let meta_report = certify_trace(&run.trace, &meta)?;
    let a = build_dynamics_matrix(&run.gram0.h, &run.hp)?;
    let budget = perturbation_budget_check(&run.trace, &meta, &a)?;

    let n = run.trace.n0;
    let radius = relu_drift_radius(run.gram0.spectrum.lambda_min, n, schedule.bounds.require_c0()?);
    let within: Vec<&ReluStep> = run.steps.iter().filter(|s| s.max_neuron_drift <= radius).collect();
    let max_drift = run.steps.iter().map(|s| s.max_neuron_drift).fold(0.0, f64::max);
    let xi0 = run.trace.entries[0].xi.norm();
    let stable: Vec<&ReluStep> = run.steps.iter().filter(|s| s.patterns_stable).collect();
    let max_stable_remainder = stable
        .iter()
        .filter_map(|s| s.pattern_remainder_norm)
        .map(|r| if r == 0.0 { 0.0 } else { r / xi0 })
        .fold(0.0, f64::max);
    Ok(ReluCertificate {
        report,
        meta_report,
        budget,
        kappa_hat: schedule.kappa,
        drift_radius: radius,
        max_neuron_drift: max_drift,
        drift_within_radius: max_drift <= radius,
        iterations_within_radius: within.len(),
        gram_drift_bound_holds: within.iter().all(|s| s.gram_drift <= 2.0 * n as f64 * radius),
        max_pattern_changed_fraction: run.steps.iter().map(|s| s.pattern_changed_fraction).fold(0.0, f64::max),
        final_pattern_changed_fraction: run.steps.last().map_or(0.0, |s| s.pattern_changed_fraction),
        stable_steps: stable.len(),
        max_stable_remainder,
        preconditions_met: false,
    })
}

/// Columns `t, loss, residual_norm, envelope, ratio, pattern_changed_fraction,
/// max_neuron_drift, iota_norm`.
pub fn relu_table(run: &ReluRun, report: &TraceReport) -> Table {
    let mut table = Table::new(&[
        "t",
        "loss",
        "residual_norm",
        "envelope",
        "ratio",
        "pattern_changed_fraction",
        "max_neuron_drift",
        "iota_norm",
    ]);
    for (s, (env, ratio)) in run.steps.iter().zip(report.envelope.iter().zip(&report.ratios)) {
        table.push(vec![
            s.t as f64,
            s.loss,
            s.residual_norm,
            *env,
            *ratio,
            s.pattern_changed_fraction,
            s.max_neuron_drift,
            s.iota_norm,
        ]);
    }
    table
}
