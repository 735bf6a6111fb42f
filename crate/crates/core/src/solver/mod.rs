//! Composite-optimization solvers with hand-crafted sparsity priors.

mod problem;
mod prox;
mod schemes;

pub use problem::{power_iteration, CompositeProblem, LassoInstance, LeastSquares, SmoothTerm};
pub use prox::{prox, soft_threshold, Orthonormal, Regularizer};
pub use schemes::{
    accelerated_extra_proximal_gradient, aepg_step, extra_proximal_gradient, ista, nesterov_accel,
    run, AepgState, EPG_STEP_FRACTION, Algorithm, Momentum, SolverConfig, SolverTrace, StopReason, TraceEntry,
};
