use nalgebra::{DMatrix, DVector};

use crate::autodiff::shrink;
use crate::error::{invalid, Result};

/// Hand-crafted sparsity prior `g`.
#[derive(Clone, Debug)]
pub enum Regularizer {
    /// `‖x‖₁`
    L1Identity,
    /// `‖W x‖₁` with `W` orthonormal.
    L1Orthonormal(Orthonormal),
}

/// Square matrix verified to satisfy `W Wᵀ = Wᵀ W = I` to 1e-10.
#[derive(Clone, Debug)]
pub struct Orthonormal(DMatrix<f64>);

impl Orthonormal {
    pub fn new(w: DMatrix<f64>) -> Result<Self> {
        if !w.is_square() {
            return invalid(format!("transform is {}x{}, not square", w.nrows(), w.ncols()));
        }
        let eye = DMatrix::<f64>::identity(w.nrows(), w.ncols());
        let err = (&w * w.transpose() - &eye)
            .abs()
            .max()
            .max((w.transpose() * &w - &eye).abs().max());
        if err > 1e-10 {
            return invalid(format!("transform is not orthonormal (deviation {err:.3e})"));
        }
        Ok(Self(w))
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }
}

impl Regularizer {
    pub fn value(&self, x: &DVector<f64>) -> f64 {
        match self {
            Regularizer::L1Identity => x.lp_norm(1),
            Regularizer::L1Orthonormal(w) => (w.matrix() * x).lp_norm(1),
        }
    }
}

pub fn soft_threshold(b: &DVector<f64>, t: f64) -> DVector<f64> {
    b.map(|v| shrink(v, t))
}

/// `argmin_x ½‖x − b‖² + t·g(x)` in closed form.
pub fn prox(g: &Regularizer, b: &DVector<f64>, t: f64) -> Result<DVector<f64>> {
    if !(t > 0.0) {
        return invalid(format!("prox scale must be positive, got {t}"));
    }
    Ok(prox_unchecked(g, b, t))
}

pub(crate) fn prox_unchecked(g: &Regularizer, b: &DVector<f64>, t: f64) -> DVector<f64> {
    match g {
        Regularizer::L1Identity => soft_threshold(b, t),
        Regularizer::L1Orthonormal(w) => {
            let w = w.matrix();
            w.transpose() * soft_threshold(&(w * b), t)
        }
    }
}
