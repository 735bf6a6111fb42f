//! Least-squares linear initializer `Q₀ = XYᵀ(YYᵀ)⁻¹`.

use std::path::Path;

use nalgebra::DMatrix;

use super::container::Container;
use crate::error::{shape_err, Error, Result};
use crate::tensor::Tensor;

/// Condition numbers above this are treated as singular.
pub const MAX_CONDITION: f64 = 1e13;

#[derive(Clone, Debug, PartialEq)]
pub struct Initializer {
    /// `[n, m]`
    pub q0: Tensor,
    /// Condition number of `YYᵀ` at fit time.
    pub condition: f64,
}

pub(crate) fn to_matrix(t: &Tensor) -> Result<DMatrix<f64>> {
    let (r, c) = t.dims2()?;
    Ok(DMatrix::from_row_slice(r, c, t.data()))
}

pub(crate) fn from_matrix(m: &DMatrix<f64>) -> Tensor {
    let (r, c) = m.shape();
    Tensor::from_fn([r, c], |i| m[(i / c, i % c)])
}

/// 2-norm condition number of a symmetric positive semidefinite matrix.
pub fn spd_condition(a: &DMatrix<f64>) -> f64 {
    let eig = a.clone().symmetric_eigenvalues();
    let max = eig.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = eig.iter().cloned().fold(f64::INFINITY, f64::min);
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Fits `Q₀` from image columns `X` (`[n, P]`) and measurement columns `Y`
/// (`[m, P]`) by a Cholesky solve of `(YYᵀ) Q₀ᵀ = YXᵀ` with one round of
/// iterative refinement.
pub fn fit_q0(x: &Tensor, y: &Tensor) -> Result<Initializer> {
    let (n, p) = x.dims2()?;
    let (m, py) = y.dims2()?;
    if p != py {
        return shape_err(format!("X has {p} columns but Y has {py}"));
    }
    if p < m {
        return Err(Error::InvalidArgument(format!(
            "need at least m={m} training pairs, got P={p}"
        )));
    }
    let xm = to_matrix(x)?;
    let ym = to_matrix(y)?;
    let gram = &ym * ym.transpose();
    let rhs = &ym * xm.transpose();
    let condition = spd_condition(&gram);
    if !(condition <= MAX_CONDITION) {
        return Err(Error::Singular { condition });
    }
    let chol = gram
        .clone()
        .cholesky()
        .ok_or(Error::Singular { condition })?;
    let mut qt = chol.solve(&rhs);
    let residual = &rhs - &gram * &qt;
    qt += chol.solve(&residual);
    debug_assert_eq!(qt.shape(), (m, n));
    Ok(Initializer {
        q0: from_matrix(&qt.transpose()),
        condition,
    })
}

impl Initializer {
    /// Max-norm residual of the normal equations `Q₀(YYᵀ) − XYᵀ`, relative to
    /// the max-norm of `XYᵀ`.
    pub fn normal_equation_residual(&self, x: &Tensor, y: &Tensor) -> Result<f64> {
        let q = to_matrix(&self.q0)?;
        let xm = to_matrix(x)?;
        let ym = to_matrix(y)?;
        let lhs = &q * (&ym * ym.transpose());
        let rhs = &xm * ym.transpose();
        let scale = rhs.amax().max(f64::MIN_POSITIVE);
        Ok((lhs - rhs).amax() / scale)
    }

    /// `‖Q Y − X‖_F` for an arbitrary `Q`.
    pub fn frobenius_residual(q: &Tensor, x: &Tensor, y: &Tensor) -> Result<f64> {
        let q = to_matrix(q)?;
        let xm = to_matrix(x)?;
        let ym = to_matrix(y)?;
        Ok((q * ym - xm).norm())
    }

    pub fn to_container(&self) -> Container {
        let (n, m) = self.q0.dims2().expect("rank-2 q0");
        Container::new("q0", self.q0.data().to_vec())
            .with("rows", n)
            .with("cols", m)
            .with("condition", format!("{:e}", self.condition))
    }

    pub fn from_container(c: &Container, origin: &Path) -> Result<Self> {
        let rows: usize = c.parse("rows", origin)?;
        let cols: usize = c.parse("cols", origin)?;
        let q0 = Tensor::new([rows, cols], c.values.clone()).map_err(|e| Error::Format {
            path: origin.to_path_buf(),
            reason: e.to_string(),
        })?;
        Ok(Self {
            q0,
            condition: c.parse("condition", origin)?,
        })
    }
}
