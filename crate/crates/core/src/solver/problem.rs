use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::prox::Regularizer;
use crate::error::{invalid, Result};

/// Smooth data-fidelity term `f` with its gradient.
pub trait SmoothTerm: Send + Sync {
    /// Length of the variable `x`.
    fn dim(&self) -> usize;
    fn value(&self, x: &DVector<f64>) -> f64;
    fn grad(&self, x: &DVector<f64>) -> DVector<f64>;
}

/// `weight · ‖A x − b‖²`. Weight ½ gives the usual Lasso fidelity; weight 1
/// gives the sensing fidelity used by the unrolled network.
#[derive(Clone, Debug)]
pub struct LeastSquares {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub weight: f64,
}

impl LeastSquares {
    pub fn new(a: DMatrix<f64>, b: DVector<f64>, weight: f64) -> Result<Self> {
        if a.nrows() != b.len() {
            return invalid(format!(
                "design matrix has {} rows but observation has {} entries",
                a.nrows(),
                b.len()
            ));
        }
        Ok(Self { a, b, weight })
    }

    /// Lipschitz constant of the gradient: `2 · weight · σ_max(A)²`.
    pub fn lipschitz(&self) -> f64 {
        2.0 * self.weight * power_iteration(&self.a, 100, 1e-10)
    }
}

impl SmoothTerm for LeastSquares {
    fn dim(&self) -> usize {
        self.a.ncols()
    }

    fn value(&self, x: &DVector<f64>) -> f64 {
        self.weight * (&self.a * x - &self.b).norm_squared()
    }

    fn grad(&self, x: &DVector<f64>) -> DVector<f64> {
        self.a.tr_mul(&(&self.a * x - &self.b)) * (2.0 * self.weight)
    }
}

/// Estimate of the largest eigenvalue of `AᵀA` (largest squared singular value).
pub fn power_iteration(a: &DMatrix<f64>, max_steps: usize, tol: f64) -> f64 {
    let n = a.ncols();
    if n == 0 {
        return 0.0;
    }
    let mut v = DVector::from_element(n, 1.0 / (n as f64).sqrt());
    let mut estimate = 0.0;
    for _ in 0..max_steps {
        let w = a.tr_mul(&(a * &v));
        let norm = w.norm();
        if norm == 0.0 {
            return 0.0;
        }
        v = w / norm;
        let converged = (norm - estimate).abs() <= tol * norm;
        estimate = norm;
        if converged {
            break;
        }
    }
    estimate
}

/// `min f(x) + λ·g(x)`.
pub struct CompositeProblem {
    pub f: Box<dyn SmoothTerm>,
    pub g: Regularizer,
    pub lambda: f64,
}

impl CompositeProblem {
    pub fn new(f: Box<dyn SmoothTerm>, g: Regularizer, lambda: f64) -> Result<Self> {
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return invalid(format!("regularization weight must be non-negative, got {lambda}"));
        }
        Ok(Self { f, g, lambda })
    }

    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        let reg = if self.lambda == 0.0 {
            0.0
        } else {
            self.lambda * self.g.value(x)
        };
        self.f.value(x) + reg
    }
}

/// Seeded random Lasso instance `½‖Ax − b‖² + λ‖x‖₁`.
#[derive(Clone, Debug)]
pub struct LassoInstance {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub lambda: f64,
    pub seed: u64,
}

impl LassoInstance {
    /// Gaussian design scaled by `1/√m`, 10%-sparse Gaussian ground truth,
    /// observation noise of standard deviation 0.01.
    pub fn random(m: usize, n: usize, lambda: f64, seed: u64) -> Result<Self> {
        if m == 0 || n == 0 {
            return invalid("lasso instance needs m, n >= 1");
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scale = 1.0 / (m as f64).sqrt();
        let a = DMatrix::from_fn(m, n, |_, _| {
            scale * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng)
        });
        let support = (n / 10).max(1);
        let mut x_true = DVector::zeros(n);
        for i in 0..support {
            x_true[(i * 7919) % n] = StandardNormal.sample(&mut rng);
        }
        let noise = DVector::from_fn(m, |_, _| {
            0.01 * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng)
        });
        let b = &a * x_true + noise;
        Ok(Self { a, b, lambda, seed })
    }

    pub fn problem(&self) -> Result<CompositeProblem> {
        let f = LeastSquares::new(self.a.clone(), self.b.clone(), 0.5)?;
        CompositeProblem::new(Box::new(f), Regularizer::L1Identity, self.lambda)
    }

    pub fn lipschitz(&self) -> f64 {
        power_iteration(&self.a, 100, 1e-10)
    }
}
