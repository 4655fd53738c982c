//! The companion matrix of the heavy-ball recursion, the constant `C₀` that
//! bounds its normalized powers, and checks on its eigenstructure.

use nalgebra::{DMatrix, DVector, Schur};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::validate_psd;
use crate::momentum::HyperParams;

/// `β` must exceed the lower end of the admissible interval by this much.
pub const ADMISSIBILITY_MARGIN: f64 = 1e-12;

/// A power-bound ratio passes when it does not exceed `1 + CERT_SLACK`.
pub const CERT_SLACK: f64 = 1e-8;

/// Tolerance on `| |λ(A)| − √β |`.
pub const MODULUS_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectrumSummary {
    pub lambda_min: f64,
    pub lambda_max: f64,
    /// `+∞` when `lambda_min == 0`.
    pub kappa: f64,
}

impl SpectrumSummary {
    pub fn new(lambda_min: f64, lambda_max: f64) -> Result<Self> {
        if !(lambda_min >= 0.0 && lambda_min <= lambda_max && lambda_max.is_finite()) {
            return Err(Error::Validation(format!(
                "spectrum must satisfy 0 <= lambda_min <= lambda_max < inf, got [{lambda_min}, {lambda_max}]"
            )));
        }
        let kappa = if lambda_min > 0.0 { lambda_max / lambda_min } else { f64::INFINITY };
        Ok(Self { lambda_min, lambda_max, kappa })
    }

    /// Summary of a nonempty list of (clamped, nonnegative) eigenvalues.
    pub fn from_eigenvalues(eigs: &[f64]) -> Result<Self> {
        if eigs.is_empty() {
            return Err(Error::Validation("empty spectrum".into()));
        }
        let lo = eigs.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = eigs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Self::new(lo, hi)
    }

    /// Validates `h` as symmetric PSD and summarizes its spectrum.
    pub fn of_psd(h: &DMatrix<f64>) -> Result<Self> {
        Self::from_eigenvalues(&validate_psd(h)?)
    }

    pub fn is_strongly_convex(&self) -> bool {
        self.lambda_min > 0.0
    }
}

/// `h(β, z) = −(β − (1 − √z)²)(β − (1 + √z)²)`.
pub fn h_function(beta: f64, z: f64) -> Result<f64> {
    if !(z >= 0.0) {
        return Err(Error::Domain(format!("h(beta, z) needs z >= 0, got {z}")));
    }
    let s = z.sqrt();
    Ok(-(beta - (1.0 - s).powi(2)) * (beta - (1.0 + s).powi(2)))
}

/// The interval `(lower, 1]` of momentum values for which the matrix-power
/// bound applies.
pub fn admissible_beta_range(eta: f64, spectrum: &SpectrumSummary) -> (f64, f64) {
    let edge = |lambda: f64| (1.0 - (eta * lambda).sqrt()).powi(2);
    (edge(spectrum.lambda_min).max(edge(spectrum.lambda_max)), 1.0)
}

pub fn is_admissible(beta: f64, lower: f64) -> bool {
    beta > lower + ADMISSIBILITY_MARGIN && beta <= 1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundConstants {
    /// `None` when `β` is inadmissible.
    pub c0: Option<f64>,
    pub h_at_min: f64,
    pub h_at_max: f64,
    /// `√β`.
    pub beta_star: f64,
    /// Envelope rate `√β + ¼√(ηλ_min)`, set only by the accelerated schedules.
    pub theta: Option<f64>,
    pub valid: bool,
    /// Lower end of the admissible interval.
    pub beta_lower: f64,
    pub beta: f64,
}

impl BoundConstants {
    /// `C₀`, or the admissibility diagnostic.
    pub fn require_c0(&self) -> Result<f64> {
        self.c0.ok_or(Error::Inadmissible { beta: self.beta, lower: self.beta_lower })
    }

    /// Sets `θ = √β + ¼√(ηλ_min)`.
    pub fn with_accelerated_theta(mut self, eta: f64, lambda_min: f64) -> Self {
        self.theta = Some(self.beta_star + 0.25 * (eta * lambda_min).sqrt());
        self
    }
}

/// `C₀ = √2 (β+1) / √min{h(β, ηλ_min), h(β, ηλ_max)}`.
///
/// Never fails; an inadmissible `β` yields `valid == false` and no `C₀`.
pub fn c0_constant(eta: f64, beta: f64, spectrum: &SpectrumSummary) -> BoundConstants {
    let (lower, _) = admissible_beta_range(eta, spectrum);
    let h_at_min = h_function(beta, eta * spectrum.lambda_min).unwrap_or(f64::NAN);
    let h_at_max = h_function(beta, eta * spectrum.lambda_max).unwrap_or(f64::NAN);
    let valid = is_admissible(beta, lower) && h_at_min > 0.0 && h_at_max > 0.0;
    let c0 = valid.then(|| 2f64.sqrt() * (beta + 1.0) / h_at_min.min(h_at_max).sqrt());
    BoundConstants {
        c0,
        h_at_min,
        h_at_max,
        beta_star: beta.max(0.0).sqrt(),
        theta: None,
        valid,
        beta_lower: lower,
        beta,
    }
}

/// `A = [(1+β)I − ηH, −βI; I, 0]`, stored as its only non-structural block.
#[derive(Debug, Clone, PartialEq)]
pub struct DynamicsMatrix {
    pub n0: usize,
    /// `(1+β)I − ηH`.
    pub top_left: DMatrix<f64>,
    pub eta: f64,
    pub beta: f64,
    pub spectrum: SpectrumSummary,
    pub bounds: BoundConstants,
    gram: DMatrix<f64>,
}

pub fn build_dynamics_matrix(h: &DMatrix<f64>, hp: &HyperParams) -> Result<DynamicsMatrix> {
    let eigs = validate_psd(h)?;
    let spectrum = SpectrumSummary::from_eigenvalues(&eigs)?;
    let n0 = h.nrows();
    let top_left = DMatrix::identity(n0, n0) * (1.0 + hp.beta) - h * hp.eta;
    Ok(DynamicsMatrix {
        n0,
        top_left,
        eta: hp.eta,
        beta: hp.beta,
        spectrum,
        bounds: c0_constant(hp.eta, hp.beta, &spectrum),
        gram: h.clone(),
    })
}

impl DynamicsMatrix {
    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    /// The four blocks `[top_left, −βI; I, 0]` in row-major block order.
    pub fn blocks(&self) -> [DMatrix<f64>; 4] {
        let n = self.n0;
        [
            self.top_left.clone(),
            DMatrix::identity(n, n) * -self.beta,
            DMatrix::identity(n, n),
            DMatrix::zeros(n, n),
        ]
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.n0;
        let mut a = DMatrix::zeros(2 * n, 2 * n);
        let [tl, tr, bl, br] = self.blocks();
        a.view_mut((0, 0), (n, n)).copy_from(&tl);
        a.view_mut((0, n), (n, n)).copy_from(&tr);
        a.view_mut((n, 0), (n, n)).copy_from(&bl);
        a.view_mut((n, n), (n, n)).copy_from(&br);
        a
    }

    /// `A v` for a stacked vector `v = [x; y]`.
    pub fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        let n = self.n0;
        let x = v.rows(0, n);
        let y = v.rows(n, n);
        let top = &self.top_left * x - y * self.beta;
        let mut out = DVector::zeros(2 * n);
        out.rows_mut(0, n).copy_from(&top);
        out.rows_mut(n, n).copy_from(&x);
        out
    }
}

/// Outcome of checking `‖Aᵏv₀‖ ≤ (√β)ᵏ C₀ ‖v₀‖` for `k = 0..=K`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerCertificate {
    pub n0: usize,
    pub eta: f64,
    pub beta: f64,
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub c0: f64,
    pub max_ratio: f64,
    pub first_violation_k: Option<usize>,
    /// Ratio per power; kept out of the JSON document.
    #[serde(skip)]
    pub ratios: Vec<f64>,
}

impl PowerCertificate {
    pub fn passed(&self) -> bool {
        self.first_violation_k.is_none()
    }
}

/// Certifies the matrix-power bound by repeated multiplication.
///
/// Iterates `v_k = (A/√β)ᵏ v₀` so that small `β` and large `K` do not push
/// the iterate into subnormal range.
pub fn certify_power_bound(a: &DynamicsMatrix, v0: &DVector<f64>, k_max: usize) -> Result<PowerCertificate> {
    let c0 = a.bounds.require_c0()?;
    if v0.len() != 2 * a.n0 {
        return Err(Error::Validation(format!("v0 has length {}, expected {}", v0.len(), 2 * a.n0)));
    }
    let v0_norm = v0.norm();
    if !(v0_norm > 0.0) {
        return Err(Error::Validation("v0 must be nonzero".into()));
    }
    let root = a.beta.sqrt();
    let scale = c0 * v0_norm;
    let mut v = v0.clone();
    let mut ratios = Vec::with_capacity(k_max + 1);
    let mut first_violation_k = None;
    for k in 0..=k_max {
        if k > 0 {
            v = a.apply(&v) / root;
        }
        let ratio = v.norm() / scale;
        if !(ratio <= 1.0 + CERT_SLACK) && first_violation_k.is_none() {
            first_violation_k = Some(k);
        }
        ratios.push(ratio);
    }
    Ok(PowerCertificate {
        n0: a.n0,
        eta: a.eta,
        beta: a.beta,
        lambda_min: a.spectrum.lambda_min,
        lambda_max: a.spectrum.lambda_max,
        c0,
        max_ratio: ratios.iter().copied().fold(0.0, f64::max),
        first_violation_k,
        ratios,
    })
}

/// Eigenvalue moduli of `A` and the per-mode Gram facts behind `C₀`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenReport {
    pub sqrt_beta: f64,
    pub spectral_radius: f64,
    pub max_modulus_deviation: f64,
    pub moduli_ok: bool,
    /// Largest eigenvalue of the per-mode eigenvector Gram `2[[β, Re z], [Re z, 1]]`.
    pub max_mode_gram_eig: f64,
    /// Smallest eigenvalue of the same Gram matrices.
    pub min_mode_gram_eig: f64,
    /// `λ_max ≤ 2(β+1)` for every mode.
    pub upper_ok: bool,
    /// `λ_min ≥ min_i h(β, ηλ_i) / (1+β)` for every mode. Only holds when
    /// `λ_max = 1+β`, so this is normally false.
    pub lower_ok: bool,
    /// `λ_min ≥ min_i h(β, ηλ_i) / (2(1+β))`, which follows from the upper bound.
    pub lower_halved_ok: bool,
    /// `min_i h(β, ηλ_i)`; equals the product of the two Gram eigenvalues.
    pub min_h: f64,
    /// Square root of the worst eigenvector-Gram condition number, an upper
    /// bound on `sup_k ‖Aᵏ‖ / (√β)ᵏ`.
    pub eigvec_condition: f64,
}

/// Eigen-solves the dense `A` and evaluates the 2×2 mode decomposition in the
/// eigenbasis of `H`.
pub fn eigenstructure_check(a: &DynamicsMatrix) -> Result<EigenReport> {
    a.bounds.require_c0()?;
    let dense = a.to_dense();
    let schur = Schur::try_new(dense, 1e-14, 100_000)
        .ok_or_else(|| Error::Numeric("Schur decomposition of the dynamics matrix did not converge".into()))?;
    let eigs = schur.complex_eigenvalues();
    let sqrt_beta = a.beta.sqrt();
    let mut spectral_radius = 0.0f64;
    let mut max_dev = 0.0f64;
    for z in eigs.iter() {
        let m = z.norm();
        spectral_radius = spectral_radius.max(m);
        max_dev = max_dev.max((m - sqrt_beta).abs());
    }

    let beta = a.beta;
    let mut max_g = 0.0f64;
    let mut min_g = f64::INFINITY;
    let mut min_h = f64::INFINITY;
    let mut cond = 1.0f64;
    for lambda in validate_psd(a.gram())? {
        let re = (1.0 + beta - a.eta * lambda) / 2.0;
        let tr = 2.0 * (beta + 1.0);
        let det = 4.0 * (beta - re * re);
        let disc = (tr * tr / 4.0 - det).max(0.0).sqrt();
        let hi = tr / 2.0 + disc;
        let lo = det / hi;
        max_g = max_g.max(hi);
        min_g = min_g.min(lo);
        min_h = min_h.min(h_function(beta, a.eta * lambda)?);
        cond = cond.max((hi / lo).sqrt());
    }
    Ok(EigenReport {
        sqrt_beta,
        spectral_radius,
        max_modulus_deviation: max_dev,
        moduli_ok: max_dev <= MODULUS_TOL,
        max_mode_gram_eig: max_g,
        min_mode_gram_eig: min_g,
        upper_ok: max_g <= 2.0 * (beta + 1.0) * (1.0 + 1e-12),
        lower_ok: min_g >= min_h / (1.0 + beta) * (1.0 - 1e-12),
        lower_halved_ok: min_g >= min_h / (2.0 * (1.0 + beta)) * (1.0 - 1e-12),
        min_h,
        eigvec_condition: cond,
    })
}

/// `2(β+1) / √min{h(β, ηλ_min), h(β, ηλ_max)}`, i.e. `√2 · C₀`.
///
/// This is what the eigenvector-Gram bounds `λ_max ≤ 2(β+1)` and
/// `λ_min ≥ h / (2(β+1))` give for `sup_k ‖Aᵏ‖ / (√β)ᵏ`. `C₀` itself can be
/// exceeded by up to the factor `√2` for unfavorable `v₀`.
pub fn eigvec_power_constant(bounds: &BoundConstants) -> Option<f64> {
    bounds.c0.map(|c0| 2f64.sqrt() * c0)
}

/// Smallest `k` with `k (√β)ᵏ > C₀ (√β)ᵏ`: past it, a bound with a linear
/// prefactor is looser than the uniform one.
pub fn linear_prefactor_crossover(c0: f64) -> usize {
    c0.floor() as usize + 1
}
