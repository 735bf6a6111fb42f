//! Unrolled EP-Net / EPN-Net.

pub mod checkpoint;
pub mod config;
pub mod params;
pub mod phase;

pub use checkpoint::Checkpoint;
pub use config::{count_params, params_per_phase, ModelConfig, Variant};
pub use params::{
    ModelParams, NonlocalParams, NonlocalVars, PhaseParams, PhaseVars, FIELD_NAMES, INIT_MOMENTUM,
    INIT_STEP, INIT_THRESHOLD,
};
pub use phase::{
    apply_g, apply_g_tilde, apply_nonlocal, g_forward, g_tilde, grad_f, grad_f_var,
    initial_image, learned_residual, model_forward, nonlocal_forward, phase_forward, phase_step,
    reconstruct, PhaseScalars, PhaseState, Sensing, SensingVars,
};
