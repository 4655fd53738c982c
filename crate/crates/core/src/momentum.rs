//! Gradient descent with Polyak's momentum.
//!
//! Two algebraically identical update rules are provided behind the
//! [`StepForm`] trait:
//!
//! * [`BufferForm`] keeps an explicit momentum buffer,
//!   `M_t = β M_{t-1} + ∇ℓ(w_t)`, `w_{t+1} = w_t − η M_t`, with `M_{-1} = 0`;
//! * [`DifferenceForm`] uses the previous iterate,
//!   `w_{t+1} = w_t − η ∇ℓ(w_t) + β (w_t − w_{t-1})`, with `w_{-1} = w_0`.
//!
//! Both are registered by name and can be selected at runtime via
//! [`step_form`].

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Iterates whose Euclidean norm exceeds this are treated as diverged.
pub const DIVERGENCE_NORM: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    pub eta: f64,
    pub beta: f64,
}

impl HyperParams {
    pub fn new(eta: f64, beta: f64) -> Result<Self> {
        if !(eta.is_finite() && eta > 0.0) {
            return Err(Error::Validation(format!("step size must be positive, got {eta}")));
        }
        if !(0.0..=1.0).contains(&beta) {
            return Err(Error::Validation(format!("momentum must lie in [0, 1], got {beta}")));
        }
        Ok(Self { eta, beta })
    }

    /// Vanilla gradient descent with the same step size.
    pub fn without_momentum(self) -> Self {
        Self { beta: 0.0, ..self }
    }
}

/// A differentiable (or subdifferentiable) loss over `R^dim`.
pub trait Objective {
    fn dim(&self) -> usize;
    fn value(&self, w: &DVector<f64>) -> f64;
    /// Gradient, or a subgradient where the loss has kinks.
    fn gradient(&self, w: &DVector<f64>) -> DVector<f64>;
}

impl<T: Objective + ?Sized> Objective for &T {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn value(&self, w: &DVector<f64>) -> f64 {
        (**self).value(w)
    }
    fn gradient(&self, w: &DVector<f64>) -> DVector<f64> {
        (**self).gradient(w)
    }
}

/// Objective assembled from closures.
pub struct FnObjective<F, G> {
    dim: usize,
    value: F,
    gradient: G,
}

impl<F, G> FnObjective<F, G>
where
    F: Fn(&DVector<f64>) -> f64,
    G: Fn(&DVector<f64>) -> DVector<f64>,
{
    pub fn new(dim: usize, value: F, gradient: G) -> Self {
        Self { dim, value, gradient }
    }
}

impl<F, G> Objective for FnObjective<F, G>
where
    F: Fn(&DVector<f64>) -> f64,
    G: Fn(&DVector<f64>) -> DVector<f64>,
{
    fn dim(&self) -> usize {
        self.dim
    }
    fn value(&self, w: &DVector<f64>) -> f64 {
        (self.value)(w)
    }
    fn gradient(&self, w: &DVector<f64>) -> DVector<f64> {
        (self.gradient)(w)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub w_curr: DVector<f64>,
    pub w_prev: DVector<f64>,
    /// Only advanced by [`BufferForm`].
    pub momentum_buf: DVector<f64>,
    pub iter: usize,
}

impl OptimizerState {
    /// State at `t = 0`: `w_{-1} = w_0` and `M_{-1} = 0`.
    pub fn new(w0: DVector<f64>) -> Self {
        let n = w0.len();
        Self { w_prev: w0.clone(), w_curr: w0, momentum_buf: DVector::zeros(n), iter: 0 }
    }

    fn check_dims(&self, grad: &DVector<f64>) -> Result<()> {
        let n = self.w_curr.len();
        if self.w_prev.len() != n || self.momentum_buf.len() != n || grad.len() != n {
            return Err(Error::Validation(format!(
                "dimension mismatch: w_curr {n}, w_prev {}, momentum {}, gradient {}",
                self.w_prev.len(),
                self.momentum_buf.len(),
                grad.len()
            )));
        }
        Ok(())
    }
}

/// One heavy-ball update rule.
pub trait StepForm: Send + Sync {
    fn name(&self) -> &'static str;

    /// Advances `state` in place given the gradient at `state.w_curr`.
    fn apply(&self, state: &mut OptimizerState, grad: &DVector<f64>, hp: &HyperParams)
        -> Result<()>;

    fn step(&self, state: &mut OptimizerState, obj: &dyn Objective, hp: &HyperParams) -> Result<()> {
        let grad = obj.gradient(&state.w_curr);
        self.apply(state, &grad, hp)
    }
}

/// Momentum-buffer presentation.
#[derive(Debug, Clone, Copy, Default)]
pub struct BufferForm;

/// Iterate-difference presentation.
#[derive(Debug, Clone, Copy, Default)]
pub struct DifferenceForm;

fn check_gradient(iter: usize, grad: &DVector<f64>) -> Result<()> {
    if grad.iter().all(|g| g.is_finite()) {
        Ok(())
    } else {
        Err(Error::Diverged { iter, reason: "non-finite gradient".into() })
    }
}

fn check_iterate(iter: usize, w: &DVector<f64>) -> Result<()> {
    if w.iter().any(|v| !v.is_finite()) {
        return Err(Error::Diverged { iter, reason: "non-finite iterate".into() });
    }
    let norm = w.norm();
    if norm > DIVERGENCE_NORM {
        return Err(Error::Diverged { iter, reason: format!("iterate norm {norm:e} exceeds {DIVERGENCE_NORM:e}") });
    }
    Ok(())
}

impl StepForm for BufferForm {
    fn name(&self) -> &'static str {
        "v1"
    }

    fn apply(&self, state: &mut OptimizerState, grad: &DVector<f64>, hp: &HyperParams) -> Result<()> {
        state.check_dims(grad)?;
        check_gradient(state.iter, grad)?;
        state.momentum_buf *= hp.beta;
        state.momentum_buf += grad;
        let next = &state.w_curr - hp.eta * &state.momentum_buf;
        check_iterate(state.iter + 1, &next)?;
        state.w_prev = std::mem::replace(&mut state.w_curr, next);
        state.iter += 1;
        Ok(())
    }
}

impl StepForm for DifferenceForm {
    fn name(&self) -> &'static str {
        "v2"
    }

    fn apply(&self, state: &mut OptimizerState, grad: &DVector<f64>, hp: &HyperParams) -> Result<()> {
        state.check_dims(grad)?;
        check_gradient(state.iter, grad)?;
        let next = &state.w_curr - hp.eta * grad + hp.beta * (&state.w_curr - &state.w_prev);
        check_iterate(state.iter + 1, &next)?;
        state.w_prev = std::mem::replace(&mut state.w_curr, next);
        state.iter += 1;
        Ok(())
    }
}

static BUFFER_FORM: BufferForm = BufferForm;
static DIFFERENCE_FORM: DifferenceForm = DifferenceForm;

/// Every registered update rule, in registration order.
pub fn step_forms() -> [&'static dyn StepForm; 2] {
    [&BUFFER_FORM, &DIFFERENCE_FORM]
}

/// Looks up an update rule by name. `"v1"`/`"buffer"` and
/// `"v2"`/`"difference"` are accepted.
pub fn step_form(name: &str) -> Option<&'static dyn StepForm> {
    match name {
        "buffer" => Some(&BUFFER_FORM),
        "difference" => Some(&DIFFERENCE_FORM),
        _ => step_forms().into_iter().find(|f| f.name() == name),
    }
}

/// Functional form of the buffer update.
pub fn step_v1(state: &OptimizerState, obj: &dyn Objective, hp: &HyperParams) -> Result<OptimizerState> {
    let mut next = state.clone();
    BUFFER_FORM.step(&mut next, obj, hp)?;
    Ok(next)
}

/// Functional form of the difference update.
pub fn step_v2(state: &OptimizerState, obj: &dyn Objective, hp: &HyperParams) -> Result<OptimizerState> {
    let mut next = state.clone();
    DIFFERENCE_FORM.step(&mut next, obj, hp)?;
    Ok(next)
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterRecord {
    pub t: usize,
    pub w: DVector<f64>,
    pub loss: f64,
    pub grad_norm: f64,
}

/// Runs `iterations` steps from `w0`, calling `recorder` for `t = 0..=iterations`.
///
/// The returned log holds the same records the recorder saw. A recorder error
/// aborts the run with the iteration index.
pub fn run(
    obj: &dyn Objective,
    hp: &HyperParams,
    w0: DVector<f64>,
    iterations: usize,
    form: &dyn StepForm,
    recorder: &mut dyn FnMut(&IterRecord) -> std::result::Result<(), String>,
) -> Result<Vec<IterRecord>> {
    if w0.len() != obj.dim() {
        return Err(Error::Validation(format!(
            "initial point has dimension {}, objective expects {}",
            w0.len(),
            obj.dim()
        )));
    }
    let mut state = OptimizerState::new(w0);
    let mut log = Vec::with_capacity(iterations + 1);
    loop {
        let grad = obj.gradient(&state.w_curr);
        let record = IterRecord {
            t: state.iter,
            loss: obj.value(&state.w_curr),
            grad_norm: grad.norm(),
            w: state.w_curr.clone(),
        };
        recorder(&record).map_err(|message| Error::Recorder { iter: record.t, message })?;
        log.push(record);
        if state.iter == iterations {
            break;
        }
        form.apply(&mut state, &grad, hp)?;
    }
    Ok(log)
}

/// [`run`] without a recorder.
pub fn run_silent(
    obj: &dyn Objective,
    hp: &HyperParams,
    w0: DVector<f64>,
    iterations: usize,
    form: &dyn StepForm,
) -> Result<Vec<IterRecord>> {
    run(obj, hp, w0, iterations, form, &mut |_| Ok(()))
}
