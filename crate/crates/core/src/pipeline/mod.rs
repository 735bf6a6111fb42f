//! Measurement matrices, patch datasets, the `Q₀` initializer and PSNR.

pub mod container;
pub mod images;
pub mod measurement;
pub mod patches;
pub mod psnr;
pub mod q0;

pub use container::Container;
pub use images::{fixture_dir, load_dir, load_image, write_pgm, GrayImage, LUMA_WEIGHTS};
pub use measurement::{gen_measurement, rows_for, MeasurementMatrix};
pub use patches::{extract_patches, split_holdout, PatchDataset, PatchRecord, PATCH_SIZE};
pub use psnr::{mean_psnr, mse, psnr};
pub use q0::{fit_q0, Initializer};

use crate::autodiff::matmul;
use crate::error::{shape_err, Result};
use crate::tensor::Tensor;

/// One training or evaluation pair with its starting iterate.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    /// Ground truth `[1, H, W]`.
    pub x: Tensor,
    /// Observation `Φ vec(x)`, `[m]`.
    pub y: Tensor,
    /// `Q₀ y` as `[1, H, W]`.
    pub x0: Tensor,
}

/// `Y = Φ X` for the columns of `X`.
pub fn measure_columns(phi: &Tensor, x_cols: &Tensor) -> Result<Tensor> {
    matmul(phi, x_cols)
}

/// Measures every patch and applies `Q₀`.
pub fn make_samples(phi: &Tensor, q0: &Tensor, patches: &[Tensor]) -> Result<Vec<Sample>> {
    let (m, n) = phi.dims2()?;
    if q0.shape() != [n, m] {
        return shape_err(format!("Q0 is {:?}, expected [{n}, {m}]", q0.shape()));
    }
    patches
        .iter()
        .map(|x| {
            if x.len() != n {
                return shape_err(format!("patch has {} pixels, Φ has {n} columns", x.len()));
            }
            let y = matmul(phi, &x.reshape([n, 1])?)?;
            let x0 = matmul(q0, &y)?.reshape(x.shape())?;
            Ok(Sample {
                x: x.clone(),
                y: y.reshape([m])?,
                x0,
            })
        })
        .collect()
}

/// Everything derived from (images, seed): Φ, patches, the split and `Q₀`.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub matrix: MeasurementMatrix,
    pub dataset: PatchDataset,
    pub train: Vec<usize>,
    pub holdout: Vec<usize>,
    /// Fitted on the training split only.
    pub init: Initializer,
}

pub fn prepare(
    images: &[GrayImage],
    count: usize,
    size: usize,
    ratio: f64,
    seed: u64,
) -> Result<Prepared> {
    let matrix = gen_measurement(size * size, ratio, seed)?;
    let dataset = extract_patches(images, count, size, seed)?;
    let (train, holdout) = split_holdout(dataset.len(), seed);
    let init = fit_split(&matrix, &dataset, &train)?;
    Ok(Prepared {
        matrix,
        dataset,
        train,
        holdout,
        init,
    })
}

/// Fits `Q₀` on the patches listed in `train`.
pub fn fit_split(matrix: &MeasurementMatrix, dataset: &PatchDataset, train: &[usize]) -> Result<Initializer> {
    let x = dataset.select(train).as_columns();
    let y = measure_columns(&matrix.phi, &x)?;
    fit_q0(&x, &y)
}

impl Prepared {
    pub fn samples(&self, indices: &[usize]) -> Result<Vec<Sample>> {
        let patches: Vec<Tensor> = indices.iter().map(|&i| self.dataset.patches[i].clone()).collect();
        make_samples(&self.matrix.phi, &self.init.q0, &patches)
    }

    pub fn train_samples(&self) -> Result<Vec<Sample>> {
        self.samples(&self.train)
    }

    pub fn holdout_samples(&self) -> Result<Vec<Sample>> {
        self.samples(&self.holdout)
    }
}
