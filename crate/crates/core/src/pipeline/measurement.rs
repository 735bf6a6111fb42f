use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::container::Container;
use crate::error::{invalid, Error, Result};
use crate::tensor::Tensor;

const MAX_ATTEMPTS: usize = 10;

/// Row-orthonormal Gaussian sensing matrix `Φ`.
#[derive(Clone, Debug, PartialEq)]
pub struct MeasurementMatrix {
    /// `[m, n]`
    pub phi: Tensor,
    pub ratio: f64,
    pub seed: u64,
}

/// `m = round(ratio · n)`, required to satisfy `1 ≤ m ≤ n`.
pub fn rows_for(n: usize, ratio: f64) -> Result<usize> {
    if !(ratio > 0.0 && ratio <= 1.0) {
        return invalid(format!("sensing ratio must lie in (0, 1], got {ratio}"));
    }
    let m = (ratio * n as f64).round() as usize;
    if m == 0 || m > n {
        return invalid(format!("ratio {ratio} with n={n} gives {m} rows"));
    }
    Ok(m)
}

/// Gram–Schmidt on the rows of `rows` (each of length `n`), two sweeps per
/// row. Returns `None` when a row collapses (rank deficiency).
fn orthonormalize_rows(mut rows: Vec<f64>, m: usize, n: usize) -> Option<Vec<f64>> {
    for i in 0..m {
        let (done, rest) = rows.split_at_mut(i * n);
        let v = &mut rest[..n];
        let original = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        for _ in 0..2 {
            for j in 0..i {
                let q = &done[j * n..(j + 1) * n];
                let proj: f64 = q.iter().zip(v.iter()).map(|(a, b)| a * b).sum();
                for (x, a) in v.iter_mut().zip(q) {
                    *x -= proj * a;
                }
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if !(norm > 1e-8 * original) {
            return None;
        }
        for x in v.iter_mut() {
            *x /= norm;
        }
    }
    Some(rows)
}

/// Draws an i.i.d. standard Gaussian `m × n` matrix and orthonormalizes its
/// rows. A rank-deficient draw is replaced by one from the next sub-stream.
pub fn gen_measurement(n: usize, ratio: f64, seed: u64) -> Result<MeasurementMatrix> {
    let m = rows_for(n, ratio)?;
    for attempt in 0..MAX_ATTEMPTS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(attempt as u64);
        let raw: Vec<f64> = (0..m * n).map(|_| StandardNormal.sample(&mut rng)).collect();
        if let Some(rows) = orthonormalize_rows(raw, m, n) {
            return Ok(MeasurementMatrix {
                phi: Tensor::new([m, n], rows)?,
                ratio,
                seed,
            });
        }
        log::warn!("measurement draw {attempt} was rank deficient; resampling");
    }
    Err(Error::Degenerate {
        attempts: MAX_ATTEMPTS,
    })
}

impl MeasurementMatrix {
    pub fn rows(&self) -> usize {
        self.phi.shape()[0]
    }

    pub fn cols(&self) -> usize {
        self.phi.shape()[1]
    }

    /// Max-norm deviation of `ΦΦᵀ` from the identity.
    pub fn orthonormality_error(&self) -> f64 {
        let (m, n) = (self.rows(), self.cols());
        let p = self.phi.data();
        let mut worst: f64 = 0.0;
        for i in 0..m {
            for j in i..m {
                let d: f64 = p[i * n..(i + 1) * n]
                    .iter()
                    .zip(&p[j * n..(j + 1) * n])
                    .map(|(a, b)| a * b)
                    .sum();
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((d - target).abs());
            }
        }
        worst
    }

    pub fn to_container(&self) -> Container {
        Container::new("matrix", self.phi.data().to_vec())
            .with("rows", self.rows())
            .with("cols", self.cols())
            .with("ratio", self.ratio)
            .with("seed", self.seed)
    }

    pub fn from_container(c: &Container, origin: &Path) -> Result<Self> {
        let rows: usize = c.parse("rows", origin)?;
        let cols: usize = c.parse("cols", origin)?;
        let phi = Tensor::new([rows, cols], c.values.clone()).map_err(|e| Error::Format {
            path: origin.to_path_buf(),
            reason: e.to_string(),
        })?;
        Ok(Self {
            phi,
            ratio: c.parse("ratio", origin)?,
            seed: c.parse("seed", origin)?,
        })
    }
}
