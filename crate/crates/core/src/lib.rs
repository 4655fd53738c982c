//! Heavy-ball (Polyak) momentum and the residual-dynamics machinery used to
//! certify its accelerated linear rate on four problem families: strongly
//! convex quadratics, smooth strongly convex functions, one-hidden-layer ReLU
//! networks in the kernel regime, and deep linear networks.
//!
//! Every realization reduces to the stacked recursion
//!
//! ```text
//! [ξ_{t+1}; ξ_t] = A [ξ_t; ξ_{t-1}] + [φ_t; 0],   A = [(1+β)I − ηH, −βI; I, 0]
//! ```
//!
//! and is certified against an envelope `rate^t · multiplier · ‖[ξ_0; ξ_{-1}]‖`.

pub mod deep_linear;
pub mod error;
pub mod linalg;
pub mod momentum;
pub mod quadratic;
pub mod relu;
pub mod report;
pub mod residual;
pub mod rng;
pub mod schedule;
pub mod spectral;

pub use error::{Error, Result};
pub use momentum::{HyperParams, Objective, OptimizerState, StepForm};
pub use spectral::{BoundConstants, DynamicsMatrix, SpectrumSummary};
