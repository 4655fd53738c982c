//! Deep linear network `U = W^{(L:1)} X / √(m^{L-1} d_y)` with orthogonal
//! initialization, its Kronecker-sum Gram operator, and momentum training
//! with residual-dynamics bookkeeping.
//!
//! Products of raw layers grow like `m^{L/2}`, so every product is formed
//! from the normalized layers `W̃ = W/√m`; the raw layers are what is stored
//! and updated.
//!
//! Vectorization is column-major, `vec(ACB) = (Bᵀ ⊗ A) vec(C)`.

use nalgebra::{DMatrix, DMatrixView, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{haar_orthonormal_columns, singular_values, spectral_norm, symmetric_eigenvalues, unvec_col_major, vec_col_major};
use crate::momentum::{HyperParams, OptimizerState, StepForm};
use crate::report::Table;
use crate::residual::{
    certify_trace, make_envelope, perturbation_budget_check, BudgetReport, EnvelopeParams, Realization,
    ResidualTrace, TraceReport, CANCELLATION_FLOOR,
};
use crate::rng::{gaussian_matrix, rng_from_seed};
use crate::schedule::{accelerated_schedule, Schedule};
use crate::spectral::{build_dynamics_matrix, SpectrumSummary};

/// Largest `d_y · n` for which the dense Gram matrix is assembled.
pub const DENSE_GRAM_CAP: usize = 4096;

/// Relative tolerance on the orthogonality invariants, scaled by `m`.
pub const ORTHOGONALITY_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct LinearNetwork {
    pub depth: usize,
    pub m: usize,
    pub d: usize,
    pub d_y: usize,
    pub layers: Vec<DMatrix<f64>>,
    layers_init: Vec<DMatrix<f64>>,
}

fn layer_shapes(depth: usize, m: usize, d: usize, d_y: usize) -> Vec<(usize, usize)> {
    if depth == 1 {
        return vec![(d_y, d)];
    }
    (1..=depth)
        .map(|l| match l {
            1 => (m, d),
            l if l == depth => (d_y, m),
            _ => (m, m),
        })
        .collect()
}

impl LinearNetwork {
    pub fn from_layers(m: usize, layers: Vec<DMatrix<f64>>) -> Result<Self> {
        let depth = layers.len();
        if depth == 0 {
            return Err(Error::Validation("network needs at least one layer".into()));
        }
        let d = layers[0].ncols();
        let d_y = layers[depth - 1].nrows();
        let expected = layer_shapes(depth, m, d, d_y);
        for (l, (w, shape)) in layers.iter().zip(&expected).enumerate() {
            if w.shape() != *shape {
                return Err(Error::Validation(format!("layer {} has shape {:?}, expected {shape:?}", l + 1, w.shape())));
            }
        }
        Ok(Self { depth, m, d, d_y, layers_init: layers.clone(), layers })
    }

    /// Same shapes and initialization snapshot, different current layers.
    pub fn with_layers(&self, layers: Vec<DMatrix<f64>>) -> Self {
        Self { layers, ..self.clone() }
    }

    pub fn layers_init(&self) -> &[DMatrix<f64>] {
        &self.layers_init
    }

    fn layer_scale(&self) -> f64 {
        if self.depth == 1 {
            1.0
        } else {
            1.0 / (self.m as f64).sqrt()
        }
    }

    /// `W^{(j:i)} / m^{(j-i+1)/2}` for 1-based `i ≤ j`.
    pub fn normalized_product(&self, i: usize, j: usize) -> DMatrix<f64> {
        normalized_product(&self.layers, self.layer_scale(), i, j)
    }

    fn flatten(&self) -> DVector<f64> {
        flatten(&self.layers)
    }
}

fn normalized_product(layers: &[DMatrix<f64>], scale: f64, i: usize, j: usize) -> DMatrix<f64> {
    let mut p = &layers[i - 1] * scale;
    for w in &layers[i..j] {
        p = w * p * scale;
    }
    p
}

fn flatten(layers: &[DMatrix<f64>]) -> DVector<f64> {
    DVector::from_iterator(layers.iter().map(|w| w.len()).sum(), layers.iter().flat_map(|w| w.iter().copied()))
}

fn layer_views<'a>(flat: &'a DVector<f64>, shapes: &[(usize, usize)]) -> Vec<DMatrixView<'a, f64>> {
    let mut offset = 0;
    shapes
        .iter()
        .map(|&(r, c)| {
            let view = DMatrixView::from_slice(&flat.as_slice()[offset..offset + r * c], r, c);
            offset += r * c;
            view
        })
        .collect()
}

/// Each layer is `√m` times a Haar-distributed matrix with orthonormal
/// columns (first layer), rows (last layer), or both.
pub fn init_orthogonal(depth: usize, m: usize, d: usize, d_y: usize, seed: u64) -> Result<LinearNetwork> {
    if depth == 0 || d == 0 || d_y == 0 {
        return Err(Error::Validation("depth and dimensions must be positive".into()));
    }
    if m < d.max(d_y) {
        return Err(Error::Validation(format!("width m = {m} must be at least max(d, d_y) = {}", d.max(d_y))));
    }
    if depth == 1 && (d != m || d_y != m) {
        return Err(Error::Validation(format!("a single orthogonal layer needs m = d = d_y, got {m}, {d}, {d_y}")));
    }
    let mut rng = rng_from_seed(seed);
    let root = (m as f64).sqrt();
    let layers = layer_shapes(depth, m, d, d_y)
        .into_iter()
        .map(|(r, c)| {
            if r >= c {
                haar_orthonormal_columns(&mut rng, r, c) * root
            } else {
                haar_orthonormal_columns(&mut rng, c, r).transpose() * root
            }
        })
        .collect();
    LinearNetwork::from_layers(m, layers)
}

/// Largest violation of the orthogonality invariants, relative to `m`.
pub fn orthogonality_defect(net: &LinearNetwork) -> f64 {
    let m = net.m as f64;
    let mut worst = 0.0f64;
    for w in &net.layers {
        let (r, c) = w.shape();
        let mut check = |g: DMatrix<f64>| {
            let n = g.nrows();
            worst = worst.max((g - DMatrix::identity(n, n) * m).abs().max() / m);
        };
        if r >= c {
            check(w.transpose() * w);
        }
        if r <= c {
            check(w * w.transpose());
        }
    }
    worst
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearDataset {
    /// `d × n`.
    pub x: DMatrix<f64>,
    /// `d_y × n`.
    pub y: DMatrix<f64>,
    pub w_star: DMatrix<f64>,
    pub rank: usize,
    /// Spectrum of `XᵀX` on its range.
    pub spectrum: SpectrumSummary,
}

impl LinearDataset {
    /// Requires `X` to have full column rank.
    pub fn new(x: DMatrix<f64>, w_star: DMatrix<f64>) -> Result<Self> {
        if w_star.ncols() != x.nrows() {
            return Err(Error::Validation(format!("W* has {} columns, X has {} rows", w_star.ncols(), x.nrows())));
        }
        let n = x.ncols();
        let gram = x.transpose() * &x;
        let eigs = symmetric_eigenvalues(&gram);
        let top = eigs.last().copied().unwrap_or(0.0);
        let tol = top * n.max(x.nrows()) as f64 * f64::EPSILON;
        let range: Vec<f64> = eigs.iter().copied().filter(|&e| e > tol).collect();
        if range.len() < n {
            return Err(Error::Validation(format!("X has rank {} < n = {n}", range.len())));
        }
        let y = &w_star * &x;
        Ok(Self { spectrum: SpectrumSummary::from_eigenvalues(&range)?, rank: range.len(), x, y, w_star })
    }

    pub fn n(&self) -> usize {
        self.x.ncols()
    }

    pub fn sigma_min_sq(&self) -> f64 {
        self.spectrum.lambda_min
    }

    pub fn sigma_max_sq(&self) -> f64 {
        self.spectrum.lambda_max
    }
}

/// Gaussian `X ∈ R^{d×n}`, `W* = I + 0.1 W̄` with Gaussian `W̄ ∈ R^{d_y×d}`,
/// and `Y = W* X`.
pub fn make_linear_dataset(d: usize, d_y: usize, n: usize, seed: u64) -> Result<LinearDataset> {
    let mut rng = rng_from_seed(seed);
    let x = gaussian_matrix(&mut rng, d, n);
    let w_star = DMatrix::identity(d_y, d) + gaussian_matrix(&mut rng, d_y, d) * 0.1;
    LinearDataset::new(x, w_star)
}

/// Prefix products `W̃^{(l-1:1)} X` for `l = 1..=L`.
fn prefixes(layers: &[DMatrixView<f64>], scale: f64, x: &DMatrix<f64>) -> Vec<DMatrix<f64>> {
    let mut out = Vec::with_capacity(layers.len());
    let mut p = x.clone();
    for w in layers {
        let next = w * &p * scale;
        out.push(p);
        p = next;
    }
    out
}

/// Suffix products `W̃^{(L:l+1)}` for `l = 1..=L`.
fn suffixes(layers: &[DMatrixView<f64>], scale: f64, d_y: usize) -> Vec<DMatrix<f64>> {
    let depth = layers.len();
    let mut out = vec![DMatrix::identity(d_y, d_y); depth];
    for l in (0..depth - 1).rev() {
        out[l] = &out[l + 1] * layers[l + 1] * scale;
    }
    out
}

/// Products shared by the forward pass, gradients and Gram action.
struct Products {
    prefix: Vec<DMatrix<f64>>,
    suffix: Vec<DMatrix<f64>>,
    u: DMatrix<f64>,
}

impl Products {
    fn new(net: &LinearNetwork, layers: &[DMatrixView<f64>], x: &DMatrix<f64>) -> Self {
        let scale = net.layer_scale();
        let prefix = prefixes(layers, scale, x);
        let suffix = suffixes(layers, scale, net.d_y);
        let last = net.depth - 1;
        let u = layers[last] * &prefix[last] / (net.d_y as f64).sqrt();
        Self { prefix, suffix, u }
    }

    /// `∂ℓ/∂W^{(l)} = S̃_lᵀ E (P̃_l X)ᵀ / √d_y` (the raw-scale factors cancel).
    fn gradients(&self, residual: &DMatrix<f64>, d_y: usize) -> Vec<DMatrix<f64>> {
        let c = 1.0 / (d_y as f64).sqrt();
        self.suffix.iter().zip(&self.prefix).map(|(s, p)| s.transpose() * residual * p.transpose() * c).collect()
    }

    /// `H_t vec(E) = vec(Σ_l S̃_l S̃_lᵀ E (P̃_l X)ᵀ(P̃_l X)) / d_y`.
    fn gram_action(&self, e: &DMatrix<f64>, d_y: usize) -> DMatrix<f64> {
        let mut acc = DMatrix::zeros(e.nrows(), e.ncols());
        for (s, p) in self.suffix.iter().zip(&self.prefix) {
            acc += s * (s.transpose() * e) * (p.transpose() * p);
        }
        acc / d_y as f64
    }

    /// `Σ_l S̃_l Z_l P̃_l X / √d_y` for raw layer-shaped `Z_l`; with `Z = W_t`
    /// this is `L U_t`.
    fn sandwich(&self, z: &[DMatrixView<f64>], d_y: usize) -> DMatrix<f64> {
        let mut acc = DMatrix::zeros(self.u.nrows(), self.u.ncols());
        for ((s, p), zl) in self.suffix.iter().zip(&self.prefix).zip(z) {
            acc += s * (zl * p);
        }
        acc / (d_y as f64).sqrt()
    }
}

fn check_data(net: &LinearNetwork, data: &LinearDataset) -> Result<()> {
    if data.x.nrows() != net.d || data.y.nrows() != net.d_y {
        return Err(Error::Validation(format!(
            "data is {}→{}, network is {}→{}",
            data.x.nrows(),
            data.y.nrows(),
            net.d,
            net.d_y
        )));
    }
    Ok(())
}

fn views(net: &LinearNetwork) -> Vec<DMatrixView<'_, f64>> {
    net.layers.iter().map(|w| w.as_view()).collect()
}

pub fn forward_linear(net: &LinearNetwork, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if x.nrows() != net.d {
        return Err(Error::Validation(format!("X has {} rows, network expects {}", x.nrows(), net.d)));
    }
    Ok(Products::new(net, &views(net), x).u)
}

/// `ℓ = ½ ‖U − Y‖_F²`.
pub fn linear_loss(net: &LinearNetwork, data: &LinearDataset) -> Result<f64> {
    Ok(0.5 * (forward_linear(net, &data.x)? - &data.y).norm_squared())
}

/// `∂ℓ/∂W^{(l)} = (W^{(L:l+1)})ᵀ (U − Y) (W^{(l-1:1)} X)ᵀ / √(m^{L-1} d_y)`.
pub fn layer_gradients(net: &LinearNetwork, data: &LinearDataset) -> Result<Vec<DMatrix<f64>>> {
    check_data(net, data)?;
    let p = Products::new(net, &views(net), &data.x);
    let e = &p.u - &data.y;
    Ok(p.gradients(&e, net.d_y))
}

#[derive(Debug, Clone, PartialEq)]
pub struct KroneckerGram {
    pub h: DMatrix<f64>,
    pub spectrum: SpectrumSummary,
}

/// Dense `H_t = Σ_l (P̃_l X)ᵀ(P̃_l X) ⊗ S̃_l S̃_lᵀ / d_y`.
pub fn gram_kronecker(net: &LinearNetwork, data: &LinearDataset) -> Result<KroneckerGram> {
    check_data(net, data)?;
    let dim = net.d_y * data.n();
    if dim > DENSE_GRAM_CAP {
        return Err(Error::TooLarge { dim, cap: DENSE_GRAM_CAP });
    }
    let p = Products::new(net, &views(net), &data.x);
    let mut h = DMatrix::zeros(dim, dim);
    for (s, pre) in p.suffix.iter().zip(&p.prefix) {
        h += (pre.transpose() * pre).kronecker(&(s * s.transpose()));
    }
    h /= net.d_y as f64;
    let h = (&h + h.transpose()) * 0.5;
    Ok(KroneckerGram { spectrum: SpectrumSummary::of_psd(&h)?, h })
}

/// `H_t vec(E)` without forming `H_t`.
pub fn gram_action(net: &LinearNetwork, data: &LinearDataset, e: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_data(net, data)?;
    Ok(Products::new(net, &views(net), &data.x).gram_action(e, net.d_y))
}

/// `η = d_y/(L σ²_max(X))`, `β = (1 − 1/(2√κ))²`, `λ = L σ²_min(X)/d_y`.
///
/// These are the accelerated schedule for the Gram spectrum at orthogonal
/// initialization, `[L σ²_min/d_y, L σ²_max/d_y]`.
pub fn linearnet_schedule(data: &LinearDataset, depth: usize, d_y: usize) -> Result<Schedule> {
    if data.rank < data.n() {
        return Err(Error::Validation("X must have full column rank".into()));
    }
    let scale = depth as f64 / d_y as f64;
    let spectrum = SpectrumSummary::new(scale * data.sigma_min_sq(), scale * data.sigma_max_sq())?;
    accelerated_schedule("linearnet", &spectrum)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainOptions {
    pub iterations: usize,
    /// Stop once the loss is at or below this value.
    pub stop_below: Option<f64>,
    /// Product singular values are checked every this many iterations (and at
    /// the end); zero disables the check.
    pub singular_stride: usize,
}

impl TrainOptions {
    pub fn new(iterations: usize) -> Self {
        Self { iterations, stop_below: None, singular_stride: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearStep {
    pub t: usize,
    pub loss: f64,
    pub residual_norm: f64,
    pub stacked_norm: f64,
    pub max_layer_drift: f64,
    /// `‖η(H₀ − H_t)ξ_t‖`.
    pub iota_norm: f64,
    /// `‖φ_t + ψ_t‖`, absent at the last step.
    pub remainder_norm: Option<f64>,
    /// `‖ξ_{t+1} − (I − ηH_t)ξ_t − β(ξ_t − ξ_{t-1}) − (φ_t + ψ_t)‖ / ‖ξ_t‖`.
    pub closure_error: Option<f64>,
    /// Extremes of `σ(W^{(j:i)}) / m^{(j-i+1)/2}` over the sampled products.
    pub product_sigma_range: Option<(f64, f64)>,
}

#[derive(Debug, Clone)]
pub struct LinearRun {
    pub hp: HyperParams,
    pub steps: Vec<LinearStep>,
    /// `ξ_t = vec(U_t − Y)` with `φ_t` the full remainder against `H₀`.
    pub trace: ResidualTrace,
    pub h0: DMatrix<f64>,
    pub initial_error: f64,
    pub final_network: LinearNetwork,
}

impl LinearRun {
    pub fn final_loss(&self) -> f64 {
        self.steps.last().map_or(f64::NAN, |s| s.loss)
    }

    /// First iteration with loss at or below `tol`.
    pub fn iterations_to_loss(&self, tol: f64) -> Option<usize> {
        self.steps.iter().find(|s| s.loss <= tol).map(|s| s.t)
    }
}

/// Layer index pairs `(i, j)` whose products are checked. The full product
/// `(1, L)` is excluded: it compresses through `d_y < m` and is not
/// norm-preserving even at initialization.
fn sampled_pairs(depth: usize) -> Vec<(usize, usize)> {
    let mid = depth.div_ceil(2);
    let mut pairs = vec![(1, 1), (depth, depth), (1, mid), (mid, depth)];
    if depth > 1 {
        pairs.extend([(1, depth - 1), (2, depth)]);
    }
    if depth > 2 {
        pairs.push((2, depth - 1));
    }
    pairs.retain(|&(i, j)| depth == 1 || (i, j) != (1, depth));
    pairs.sort_unstable();
    pairs.dedup();
    pairs
}

fn product_sigma_range(net: &LinearNetwork) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = 0.0f64;
    for (i, j) in sampled_pairs(net.depth) {
        let sv = singular_values(&net.normalized_product(i, j));
        hi = hi.max(sv[0]);
        lo = lo.min(*sv.last().unwrap());
    }
    (lo, hi)
}

/// Trains every layer for up to `opts.iterations` steps of `form`.
pub fn train_linear(
    net: &LinearNetwork,
    data: &LinearDataset,
    hp: &HyperParams,
    opts: &TrainOptions,
    form: &dyn StepForm,
) -> Result<LinearRun> {
    check_data(net, data)?;
    let shapes: Vec<(usize, usize)> = net.layers.iter().map(|w| w.shape()).collect();
    let init_flat = flatten(net.layers_init());
    let d_y = net.d_y;
    let n0 = d_y * data.n();

    let p0 = Products::new(net, &layer_views(&init_flat, &shapes), &data.x);
    let h0_dense = if n0 <= DENSE_GRAM_CAP {
        gram_kronecker(&net.with_layers(net.layers_init().to_vec()), data)?.h
    } else {
        DMatrix::zeros(0, 0)
    };

    let mut state = OptimizerState::new(net.flatten());
    let mut trace = ResidualTrace::new(n0);
    let mut steps: Vec<LinearStep> = Vec::new();
    let mut u_prev: Option<DMatrix<f64>> = None;
    // φ_t + ψ_t of the previous step, still missing e_{t+1}.
    let mut pending: Option<(DMatrix<f64>, DMatrix<f64>, DMatrix<f64>)> = None;
    let mut initial_error = 0.0;
    loop {
        let t = state.iter;
        let layers = layer_views(&state.w_curr, &shapes);
        let prods = Products::new(net, &layers, &data.x);
        let e = &prods.u - &data.y;
        let xi = vec_col_major(&e);
        if t == 0 {
            initial_error = e.norm();
        }
        trace.push(xi.clone())?;

        if let Some((e_before, partial, measured_base)) = pending.take() {
            // φ_{t-1} = vec(U_t − U_{t-1}) + η A_{t-1}; `partial` holds η A + ψ.
            let assembled = &e - &e_before + partial;
            let measured = &e - measured_base;
            let prev = &mut steps[t - 1];
            let scale_xi = prev.residual_norm;
            prev.remainder_norm = Some(assembled.norm());
            let gap = (&measured - &assembled).norm();
            prev.closure_error = Some(if gap == 0.0 { 0.0 } else { gap / scale_xi });
            let h0_linear = {
                let xi_prev = &trace.entries[t - 1].xi;
                let xi_prev2 = if t >= 2 { &trace.entries[t - 2].xi } else { xi_prev };
                let h0xi = vec_col_major(&p0.gram_action(&unvec_col_major(xi_prev, d_y, data.n()), d_y));
                xi_prev - h0xi * hp.eta + (xi_prev - xi_prev2) * hp.beta
            };
            trace.set_phi(t - 1, &xi - h0_linear)?;
        }

        let drift = layers
            .iter()
            .zip(net.layers_init())
            .map(|(w, w0)| (w - w0).norm())
            .fold(0.0, f64::max);
        let loss = 0.5 * e.norm_squared();
        let iota = (p0.gram_action(&e, d_y) - prods.gram_action(&e, d_y)).norm() * hp.eta;
        let done = t == opts.iterations || opts.stop_below.is_some_and(|tol| loss <= tol);
        let sigma = (opts.singular_stride > 0 && (t.is_multiple_of(opts.singular_stride) || done)).then(|| {
            product_sigma_range(&net.with_layers(layers.iter().map(|v| v.clone_owned()).collect()))
        });
        steps.push(LinearStep {
            t,
            loss,
            residual_norm: e.norm(),
            stacked_norm: trace.entries[t].stacked_norm,
            max_layer_drift: drift,
            iota_norm: iota,
            remainder_norm: None,
            closure_error: None,
            product_sigma_range: sigma,
        });
        if done {
            break;
        }

        let grads = prods.gradients(&e, d_y);
        let w_t = state.w_curr.clone();
        let w_prev = state.w_prev.clone();
        form.apply(&mut state, &flatten(&grads), hp)?;

        // M_{t,l} = (W_t − W_{t+1}) / η.
        let momentum = (&w_t - &state.w_curr) / hp.eta;
        let a_t = prods.sandwich(&layer_views(&momentum, &shapes), d_y);
        // ψ_t = β[(L−1)U_t + U_{t-1} − Σ_l S̃_l W_{t-1,l} P̃_l X/√d_y]; with
        // the sandwich of W_t equal to L U_t this is the cancellation-free
        // β[U_{t-1} − U_t + Σ_l S̃_l (W_t − W_{t-1})_l P̃_l X/√d_y].
        let step_back = &w_t - &w_prev;
        let b_t = prods.sandwich(&layer_views(&step_back, &shapes), d_y);
        let u_tm1 = u_prev.as_ref().unwrap_or(&prods.u);
        let psi = (u_tm1 - &prods.u + &b_t) * hp.beta;
        let h_e = prods.gram_action(&e, d_y);
        let e_prev = u_tm1 - &data.y;
        // ξ_{t+1} − [ξ_t − ηH_tξ_t + β(ξ_t − ξ_{t-1})] = e_{t+1} − base.
        let base = &e - h_e * hp.eta + (&e - &e_prev) * hp.beta;
        pending = Some((e.clone(), a_t * hp.eta + psi, base));
        u_prev = Some(prods.u);
    }
    let final_network = net.with_layers(layer_views(&state.w_curr, &shapes).iter().map(|v| v.clone_owned()).collect());
    Ok(LinearRun { hp: *hp, steps, trace, h0: h0_dense, initial_error, final_network })
}

/// `R = 64 ‖X‖₂ √d_y / (L σ²_min(X)) · ν · C₀ · B₀`.
pub fn linear_drift_radius(data: &LinearDataset, depth: usize, d_y: usize, nu: f64, c0: f64, b0: f64) -> f64 {
    64.0 * spectral_norm(&data.x) * (d_y as f64).sqrt() / (depth as f64 * data.sigma_min_sq()) * nu * c0 * b0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LinearCertificate {
    /// Against `(1 − 1/(4√κ))^t 8√κ`.
    pub report: TraceReport,
    /// Against the meta envelope `θ^t 2C₀`.
    pub meta_report: TraceReport,
    pub budget: BudgetReport,
    pub kappa: f64,
    pub drift_radius: f64,
    pub max_layer_drift: f64,
    pub drift_within_radius: bool,
    /// Product singular values stayed within `[0.9, 1.1] · m^{(j-i+1)/2}`.
    pub product_bounds_hold: bool,
    /// `‖ι_t‖ ≤ (ηλ/80) θ^t ν C₀ ‖[ξ_0; ξ_{-1}]‖` at every iteration.
    pub iota_bound_holds: bool,
    pub max_iota_ratio: f64,
    pub max_closure_error: f64,
    /// The width requirement has an unspecified constant, so this is always
    /// false and the envelope checks are empirical observations.
    pub preconditions_met: bool,
}

pub fn certify_linear_run(run: &LinearRun, schedule: &Schedule, data: &LinearDataset, depth: usize, d_y: usize) -> Result<LinearCertificate> {
    let floor = CANCELLATION_FLOOR * run.trace.initial_stacked_norm();
    let (rate, multiplier) = schedule.perturbed_envelope();
    let envelope = EnvelopeParams::stated(Realization::DeepLinear, rate, multiplier)
        .with_preconditions(false)
        .with_noise_floor(floor);
    let meta = make_envelope(&run.hp, &schedule.bounds, true, Realization::DeepLinear)?
        .with_preconditions(false)
        .with_noise_floor(floor);
    meta.check_consistency(run.hp.beta, run.steps.len())?;
    let report = certify_trace(&run.trace, &envelope)?;
    let meta_report = certify_trace(&run.trace, &meta)?;
    let budget = if run.h0.nrows() == run.trace.n0 {
        perturbation_budget_check(&run.trace, &meta, &build_dynamics_matrix(&run.h0, &run.hp)?)?
    } else {
        BudgetReport { lhs: vec![], rhs: vec![], max_ratio: f64::NAN, passed: false, partial: true }
    };

    let c0 = schedule.bounds.require_c0()?;
    let radius = linear_drift_radius(data, depth, d_y, meta.nu, c0, run.initial_error);
    let max_drift = run.steps.iter().map(|s| s.max_layer_drift).fold(0.0, f64::max);
    let product_bounds_hold = run
        .steps
        .iter()
        .filter_map(|s| s.product_sigma_range)
        .all(|(lo, hi)| lo >= 0.9 && hi <= 1.1);
    let lambda = 1.0 / (schedule.hp.eta * schedule.kappa);
    let theta = meta.rate;
    let s0 = run.trace.initial_stacked_norm();
    let iota_ratios: Vec<f64> = run
        .steps
        .iter()
        .map(|s| {
            let bound = run.hp.eta * lambda / 80.0 * theta.powi(s.t as i32) * meta.nu * c0 * s0;
            if s.iota_norm == 0.0 { 0.0 } else { s.iota_norm / bound }
        })
        .collect();
    let max_iota_ratio = iota_ratios.iter().copied().fold(0.0, f64::max);
    Ok(LinearCertificate {
        report,
        meta_report,
        budget,
        kappa: schedule.kappa,
        drift_radius: radius,
        max_layer_drift: max_drift,
        drift_within_radius: max_drift <= radius,
        product_bounds_hold,
        iota_bound_holds: max_iota_ratio <= 1.0,
        max_iota_ratio,
        max_closure_error: run.steps.iter().filter_map(|s| s.closure_error).fold(0.0, f64::max),
        preconditions_met: false,
    })
}

/// Columns `t, loss, residual_norm, envelope, ratio, max_layer_drift,
/// drift_budget, iota_norm, remainder_norm`.
pub fn linear_table(run: &LinearRun, report: &TraceReport, drift_budget: f64) -> Table {
    let mut table = Table::new(&[
        "t",
        "loss",
        "residual_norm",
        "envelope",
        "ratio",
        "max_layer_drift",
        "drift_budget",
        "iota_norm",
        "remainder_norm",
    ]);
    for (s, (env, ratio)) in run.steps.iter().zip(report.envelope.iter().zip(&report.ratios)) {
        table.push(vec![
            s.t as f64,
            s.loss,
            s.residual_norm,
            *env,
            *ratio,
            s.max_layer_drift,
            drift_budget,
            s.iota_norm,
            s.remainder_norm.unwrap_or(f64::NAN),
        ]);
    }
    table
}
