//! Accelerated extra proximal gradient solvers and the unrolled EP-Net /
//! EPN-Net for compressive-sensing reconstruction.

pub mod autodiff;
pub mod cli;
pub mod error;
pub mod network;
pub mod pipeline;
pub mod solver;
pub mod tensor;
pub mod trainer;

pub use error::{Error, Result};
pub use tensor::Tensor;
