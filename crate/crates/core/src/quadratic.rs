//! Strongly convex quadratics `½ wᵀΓw + bᵀw`, a family of smooth strongly
//! convex test functions with a Lipschitz Hessian, and envelope certification
//! of momentum runs on both.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{haar_orthogonal, symmetric_eigenvalues};
use crate::momentum::{run_silent, HyperParams, Objective, OptimizerState, StepForm};
use crate::report::Table;
use crate::residual::{
    certify_trace, make_envelope, perturbation_budget_check, BudgetReport, EnvelopeParams, Realization,
    ResidualTrace, TraceReport,
};
use crate::rng::{gaussian_vector, rng_from_seed};
use crate::schedule::accelerated_schedule;
use crate::spectral::{build_dynamics_matrix, c0_constant, SpectrumSummary};

/// Relative residual used for iteration counts.
pub const ITERS_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub enum LinearTerm {
    Zero,
    Vector(DVector<f64>),
    /// Standard Gaussian entries from this seed.
    Seed(u64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticProblem {
    pub gamma: DMatrix<f64>,
    pub b: DVector<f64>,
    pub w_star: DVector<f64>,
    pub spectrum: SpectrumSummary,
}

impl Objective for QuadraticProblem {
    fn dim(&self) -> usize {
        self.b.len()
    }

    fn value(&self, w: &DVector<f64>) -> f64 {
        0.5 * w.dot(&(&self.gamma * w)) + self.b.dot(w)
    }

    fn gradient(&self, w: &DVector<f64>) -> DVector<f64> {
        &self.gamma * w + &self.b
    }
}

/// `Γ = Qᵀ diag(eigs) Q` with `Q` Haar-distributed from `rotation_seed`, or
/// the identity when no seed is given.
pub fn make_quadratic(eigs: &[f64], rotation_seed: Option<u64>, b: LinearTerm) -> Result<QuadraticProblem> {
    if eigs.is_empty() {
        return Err(Error::Validation("quadratic needs at least one eigenvalue".into()));
    }
    if let Some(bad) = eigs.iter().find(|&&e| !(e > 0.0 && e.is_finite())) {
        return Err(Error::Validation(format!("eigenvalues must be positive, got {bad}")));
    }
    let n = eigs.len();
    let diag = DMatrix::from_diagonal(&DVector::from_column_slice(eigs));
    let gamma = match rotation_seed {
        Some(seed) => {
            let q = haar_orthogonal(&mut rng_from_seed(seed), n);
            let g = q.transpose() * diag * q;
            (&g + g.transpose()) * 0.5
        }
        None => diag,
    };
    let b = match b {
        LinearTerm::Zero => DVector::zeros(n),
        LinearTerm::Vector(v) if v.len() == n => v,
        LinearTerm::Vector(v) => {
            return Err(Error::Validation(format!("linear term has length {}, expected {n}", v.len())))
        }
        LinearTerm::Seed(seed) => gaussian_vector(&mut rng_from_seed(seed), n),
    };
    let chol = gamma
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Numeric("Cholesky factorization of the quadratic failed".into()))?;
    let w_star = -chol.solve(&b);
    let resid = (&gamma * &w_star + &b).norm();
    if resid > 1e-8 * b.norm().max(f64::MIN_POSITIVE) && resid > 0.0 {
        return Err(Error::Numeric(format!("minimizer residual {resid:e} too large")));
    }
    let lo = eigs.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = eigs.iter().copied().fold(0.0, f64::max);
    Ok(QuadraticProblem { gamma, b, w_star, spectrum: SpectrumSummary::new(lo, hi)? })
}

/// `n` eigenvalues from `mu` to `mu·kappa`; the interior ones are uniform on
/// that interval.
pub fn spread_spectrum(rng: &mut impl Rng, n: usize, mu: f64, kappa: f64) -> Vec<f64> {
    let alpha = mu * kappa;
    (0..n)
        .map(|i| match i {
            0 => mu,
            i if i == n - 1 => alpha,
            _ => rng.random_range(mu..=alpha),
        })
        .collect()
}

/// A point at distance `radius` from `center` in a seeded random direction.
pub fn point_at_distance(center: &DVector<f64>, radius: f64, seed: u64) -> DVector<f64> {
    let d = gaussian_vector(&mut rng_from_seed(seed), center.len());
    center + d.normalize() * radius
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub kappa: f64,
    pub schedule: String,
    pub passed: bool,
    pub max_ratio: f64,
    #[serde(rename = "iters_to_1e-8")]
    pub iters_to_tol: Option<usize>,
}

/// A certified momentum run on a problem with known minimizer.
#[derive(Debug, Clone)]
pub struct EnvelopeRun {
    pub schedule: String,
    pub kappa: f64,
    pub hp: HyperParams,
    pub trace: ResidualTrace,
    pub envelope: EnvelopeParams,
    pub report: TraceReport,
    /// First `t` with `‖ξ_t‖ ≤ 1e-8 ‖ξ_0‖`.
    pub iters_to_tol: Option<usize>,
    /// `max_t ‖ξ_{t+1} − (I − ηH)ξ_t − β(ξ_t − ξ_{t-1}) − φ_t‖ / ‖ξ_t‖` with
    /// the recorded `φ_t`.
    pub max_closure_error: f64,
}

impl EnvelopeRun {
    /// Columns `t, residual_norm, envelope_value, ratio`.
    pub fn table(&self) -> Table {
        let mut table = Table::new(&["t", "residual_norm", "envelope_value", "ratio"]);
        for (e, (env, ratio)) in self.trace.entries.iter().zip(self.report.envelope.iter().zip(&self.report.ratios)) {
            table.push(vec![e.t as f64, e.stacked_norm, *env, *ratio]);
        }
        table
    }

    pub fn summary(&self) -> RunSummary {
        RunSummary {
            kappa: self.kappa,
            schedule: self.schedule.clone(),
            passed: self.report.passed,
            max_ratio: self.report.max_ratio,
            iters_to_tol: self.iters_to_tol,
        }
    }
}

fn iters_to_tol(trace: &ResidualTrace, tol: f64) -> Option<usize> {
    let x0 = trace.entries.first()?.xi.norm();
    trace.entries.iter().find(|e| e.xi.norm() <= tol * x0).map(|e| e.t)
}

/// Largest relative mismatch of `ξ_{t+1} = (I − ηH)ξ_t + β(ξ_t − ξ_{t-1}) + φ_t`.
pub(crate) fn closure_error(trace: &ResidualTrace, h: &DMatrix<f64>, hp: &HyperParams) -> f64 {
    let mut worst = 0.0f64;
    for t in 0..trace.len().saturating_sub(1) {
        let xi = &trace.entries[t].xi;
        let prev = if t == 0 { xi } else { &trace.entries[t - 1].xi };
        let mut predicted = xi - (h * xi) * hp.eta + (xi - prev) * hp.beta;
        if let Some(phi) = &trace.entries[t].phi {
            predicted += phi;
        }
        let err = (&trace.entries[t + 1].xi - predicted).norm();
        let scale = xi.norm();
        if err > 0.0 {
            worst = worst.max(if scale > 0.0 { err / scale } else { f64::INFINITY });
        }
    }
    worst
}

/// Runs momentum on `problem` from `w0 = w_{-1}` and certifies
/// `‖[ξ_t; ξ_{t-1}]‖ ≤ (√β)^t C₀ ‖[ξ_0; ξ_{-1}]‖` at every `t`.
///
/// The recorded perturbation is the zero vector: a quadratic's residual
/// recursion is exactly linear.
pub fn certify_quadratic_run(
    problem: &QuadraticProblem,
    hp: &HyperParams,
    w0: &DVector<f64>,
    iterations: usize,
    form: &dyn StepForm,
    schedule: &str,
) -> Result<EnvelopeRun> {
    let bounds = c0_constant(hp.eta, hp.beta, &problem.spectrum);
    let envelope = make_envelope(hp, &bounds, false, Realization::Quadratic)?;
    envelope.check_consistency(hp.beta, iterations)?;
    let log = run_silent(problem, hp, w0.clone(), iterations, form)?;
    let n = problem.dim();
    let mut trace = ResidualTrace::new(n);
    for rec in &log {
        trace.push(&rec.w - &problem.w_star)?;
        trace.set_phi(rec.t, DVector::zeros(n))?;
    }
    let report = certify_trace(&trace, &envelope)?;
    Ok(EnvelopeRun {
        schedule: schedule.to_string(),
        kappa: problem.spectrum.kappa,
        hp: *hp,
        max_closure_error: closure_error(&trace, &problem.gamma, hp),
        iters_to_tol: iters_to_tol(&trace, ITERS_TOL),
        trace: trace.with_envelope(&envelope),
        envelope,
        report,
    })
}

/// Steps until `‖w_t − w*‖ ≤ tol · ‖w_0 − w*‖`, or `None` after `max_iter`.
pub fn iterations_to_tolerance(
    obj: &dyn Objective,
    w_star: &DVector<f64>,
    hp: &HyperParams,
    w0: &DVector<f64>,
    tol: f64,
    max_iter: usize,
    form: &dyn StepForm,
) -> Result<Option<usize>> {
    let target = tol * (w0 - w_star).norm();
    let mut state = OptimizerState::new(w0.clone());
    for t in 0..=max_iter {
        if (&state.w_curr - w_star).norm() <= target {
            return Ok(Some(t));
        }
        if t < max_iter {
            form.step(&mut state, obj, hp)?;
        }
    }
    Ok(None)
}

/// `max |g'''|` for `g = log cosh`, attained where `tanh² = 1/3`.
const LOGCOSH_THIRD_DERIVATIVE_MAX: f64 = 0.769_800_358_919_501;

/// Default relative size of the non-quadratic part in [`make_f2_testfn`].
pub const DEFAULT_F2_STRENGTH: f64 = 0.5;

/// Largest condition number for which the local-ball radius is a usable
/// desk-scale distance.
pub const F2_RADIUS_FEASIBLE_KAPPA: f64 = 25.0;

/// `f(w) = ½ (w−c)ᵀ Γ₀ (w−c) + s Σᵢ log cosh(vᵢᵀ(w−c))` with unit `vᵢ`.
///
/// The Hessian is `Γ₀ + s Σᵢ sech²(·) vᵢvᵢᵀ`, which lies between `Γ₀` and
/// `Γ₀ + s V`, `V = Σ vᵢvᵢᵀ`. Choosing `λ_min(Γ₀) = μ` and
/// `λ_max(Γ₀) = α − s‖V‖` keeps it inside `[μ, α]`; the coupling `s` is also
/// capped so the Hessian is `α`-Lipschitz. Every term is even about `c`, so
/// `c` is the minimizer.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothStronglyConvexProblem {
    pub gamma0: DMatrix<f64>,
    /// Unit directions as columns.
    pub directions: DMatrix<f64>,
    pub coupling: f64,
    pub center: DVector<f64>,
    pub mu: f64,
    pub alpha: f64,
    /// Upper bound on the Hessian's Lipschitz constant.
    pub hessian_lipschitz: f64,
    pub w_star: DVector<f64>,
}

impl SmoothStronglyConvexProblem {
    pub fn kappa(&self) -> f64 {
        self.alpha / self.mu
    }

    pub fn spectrum(&self) -> SpectrumSummary {
        SpectrumSummary { lambda_min: self.mu, lambda_max: self.alpha, kappa: self.kappa() }
    }

    fn projections(&self, w: &DVector<f64>) -> DVector<f64> {
        self.directions.tr_mul(&(w - &self.center))
    }

    fn weighted_outer(&self, weights: &DVector<f64>) -> DMatrix<f64> {
        let scaled = DMatrix::from_fn(self.directions.nrows(), self.directions.ncols(), |r, c| {
            self.directions[(r, c)] * weights[c]
        });
        &self.gamma0 + scaled * self.directions.transpose() * self.coupling
    }

    pub fn hessian(&self, w: &DVector<f64>) -> DMatrix<f64> {
        let a = self.projections(w);
        self.weighted_outer(&a.map(|x| 1.0 / x.cosh().powi(2)))
    }

    /// `∫₀¹ ∇²f((1−τ)w + τc) dτ`, in closed form: the `i`-th curvature weight
    /// becomes `tanh(aᵢ)/aᵢ`.
    pub fn secant_hessian(&self, w: &DVector<f64>) -> DMatrix<f64> {
        let a = self.projections(w);
        self.weighted_outer(&a.map(|x| if x == 0.0 { 1.0 } else { x.tanh() / x }))
    }
}

impl Objective for SmoothStronglyConvexProblem {
    fn dim(&self) -> usize {
        self.center.len()
    }

    fn value(&self, w: &DVector<f64>) -> f64 {
        let d = w - &self.center;
        let a = self.projections(w);
        let log_cosh: f64 = a.iter().map(|&x| x.abs() + (-2.0 * x.abs()).exp().ln_1p() - std::f64::consts::LN_2).sum();
        0.5 * d.dot(&(&self.gamma0 * &d)) + self.coupling * log_cosh
    }

    fn gradient(&self, w: &DVector<f64>) -> DVector<f64> {
        let d = w - &self.center;
        let a = self.projections(w);
        &self.gamma0 * &d + &self.directions * a.map(f64::tanh) * self.coupling
    }
}

/// [`make_f2_testfn_with`] at the default strength, centered at the origin.
pub fn make_f2_testfn(mu: f64, alpha: f64, dim: usize, seed: u64) -> Result<SmoothStronglyConvexProblem> {
    make_f2_testfn_with(mu, alpha, dim, seed, DEFAULT_F2_STRENGTH)
}

/// `strength ∈ [0, 1]` scales the non-quadratic part relative to the room
/// `α − μ` it may occupy; zero gives a pure quadratic.
pub fn make_f2_testfn_with(
    mu: f64,
    alpha: f64,
    dim: usize,
    seed: u64,
    strength: f64,
) -> Result<SmoothStronglyConvexProblem> {
    if !(mu > 0.0 && mu <= alpha && alpha.is_finite()) {
        return Err(Error::Validation(format!("need 0 < mu <= alpha, got mu = {mu}, alpha = {alpha}")));
    }
    if dim == 0 || !(0.0..=1.0).contains(&strength) {
        return Err(Error::Validation(format!("need dim >= 1 and strength in [0, 1], got {dim}, {strength}")));
    }
    let mut rng = rng_from_seed(seed);
    let k = dim;
    let mut directions = DMatrix::zeros(dim, k);
    for c in 0..k {
        directions.set_column(c, &gaussian_vector(&mut rng, dim).normalize());
    }
    let v_norm = symmetric_eigenvalues(&(&directions * directions.transpose())).last().copied().unwrap_or(0.0);
    let coupling = (strength * (alpha - mu) / v_norm).min(alpha / (LOGCOSH_THIRD_DERIVATIVE_MAX * k as f64));
    let top = alpha - coupling * v_norm;
    let eigs: Vec<f64> = (0..dim)
        .map(|i| match i {
            0 => mu,
            i if i == dim - 1 => top,
            _ => rng.random_range(mu..=top),
        })
        .collect();
    let q = haar_orthogonal(&mut rng, dim);
    let g = q.transpose() * DMatrix::from_diagonal(&DVector::from_vec(eigs)) * &q;
    let gamma0 = (&g + g.transpose()) * 0.5;
    let mut problem = SmoothStronglyConvexProblem {
        gamma0,
        directions,
        coupling,
        center: DVector::zeros(dim),
        mu,
        alpha,
        hessian_lipschitz: coupling * LOGCOSH_THIRD_DERIVATIVE_MAX * k as f64,
        w_star: DVector::zeros(dim),
    };
    let start = point_at_distance(&problem.center, 1.0, seed ^ 0x5EED);
    problem.w_star = damped_newton(&problem, start, 1e-13)?;
    Ok(problem)
}

/// Damped Newton with Armijo backtracking, run until the step stalls.
pub fn damped_newton(problem: &SmoothStronglyConvexProblem, mut w: DVector<f64>, tol: f64) -> Result<DVector<f64>> {
    for _ in 0..200 {
        let g = problem.gradient(&w);
        let hess = problem.hessian(&w);
        let step = hess
            .cholesky()
            .ok_or_else(|| Error::Numeric("Hessian not positive definite in Newton step".into()))?
            .solve(&g);
        let f0 = problem.value(&w);
        let slope = g.dot(&step);
        let mut t = 1.0;
        while t > 1e-10 && problem.value(&(&w - &step * t)) > f0 - 0.25 * t * slope {
            t *= 0.5;
        }
        let next = &w - &step * t;
        if next == w {
            break;
        }
        w = next;
    }
    let g = problem.gradient(&w).norm();
    if !(g <= tol * problem.alpha) {
        return Err(Error::Numeric(format!("Newton stopped with gradient norm {g:e}")));
    }
    Ok(w)
}

/// `1/(683 κ^{3/2})`, the stacked-distance radius of the local guarantee.
pub fn local_radius(kappa: f64) -> f64 {
    1.0 / (683.0 * kappa.powf(1.5))
}

/// A start with `‖[w₀ − w*; w₋₁ − w*]‖ = fraction · local_radius(κ)`.
pub fn local_start(problem: &SmoothStronglyConvexProblem, fraction: f64, seed: u64) -> DVector<f64> {
    point_at_distance(&problem.w_star, fraction * local_radius(problem.kappa()) / 2f64.sqrt(), seed)
}

#[derive(Debug, Clone)]
pub struct LocalRun {
    pub run: EnvelopeRun,
    /// The envelope `θ^t 2C₀` of the meta constants (tighter than `8√κ`).
    pub meta_report: TraceReport,
    pub budget: BudgetReport,
    pub radius: f64,
    pub radius_feasible: bool,
}

/// Certifies `‖[ξ_t; ξ_{t-1}]‖ ≤ (1 − 1/(4√κ))^t 8√κ ‖[ξ_0; ξ_{-1}]‖` for a
/// start inside the local ball, with `η = 1/α` and `β = (1 − 1/(2√κ))²`.
///
/// The perturbation `φ_t = η(H₀ − H_t)ξ_t` is recorded as the measured
/// remainder of the recursion linearized at the secant Hessian `H₀` of `w₀`.
pub fn certify_local_run(
    problem: &SmoothStronglyConvexProblem,
    w0: &DVector<f64>,
    iterations: usize,
    form: &dyn StepForm,
) -> Result<LocalRun> {
    let kappa = problem.kappa();
    let radius = local_radius(kappa);
    let distance = 2f64.sqrt() * (w0 - &problem.w_star).norm();
    if distance > radius {
        return Err(Error::OutsideBall { distance, radius });
    }
    let schedule = accelerated_schedule("local-accelerated", &problem.spectrum())?;
    let hp = schedule.hp;
    let (rate, multiplier) = schedule.perturbed_envelope();
    let envelope = EnvelopeParams::stated(Realization::SmoothStronglyConvex, rate, multiplier);
    let meta = make_envelope(&hp, &schedule.bounds, true, Realization::SmoothStronglyConvex)?;
    meta.check_consistency(hp.beta, iterations)?;

    let log = run_silent(problem, &hp, w0.clone(), iterations, form)?;
    let n = problem.dim();
    let mut trace = ResidualTrace::new(n);
    for rec in &log {
        trace.push(&rec.w - &problem.w_star)?;
    }
    let h0 = problem.secant_hessian(w0);
    for t in 0..trace.len().saturating_sub(1) {
        let xi = trace.entries[t].xi.clone();
        let prev = if t == 0 { xi.clone() } else { trace.entries[t - 1].xi.clone() };
        let linear = &xi - (&h0 * &xi) * hp.eta + (&xi - &prev) * hp.beta;
        let phi = &trace.entries[t + 1].xi - linear;
        trace.set_phi(t, phi)?;
    }
    let report = certify_trace(&trace, &envelope)?;
    let meta_report = certify_trace(&trace, &meta)?;
    let a = build_dynamics_matrix(&h0, &hp)?;
    let budget = perturbation_budget_check(&trace, &meta, &a)?;
    let run = EnvelopeRun {
        schedule: schedule.name.to_string(),
        kappa,
        hp,
        max_closure_error: closure_error(&trace, &h0, &hp),
        iters_to_tol: iters_to_tol(&trace, ITERS_TOL),
        trace: trace.with_envelope(&envelope),
        envelope,
        report,
    };
    Ok(LocalRun { run, meta_report, budget, radius, radius_feasible: kappa <= F2_RADIUS_FEASIBLE_KAPPA })
}
