use crate::error::{shape_err, Result};
use crate::tensor::Tensor;

pub fn mse(a: &Tensor, b: &Tensor) -> Result<f64> {
    if a.shape() != b.shape() {
        return shape_err(format!("psnr inputs differ: {:?} vs {:?}", a.shape(), b.shape()));
    }
    if a.is_empty() {
        return shape_err("psnr of empty images");
    }
    let sum: f64 = a.data().iter().zip(b.data()).map(|(x, y)| (x - y) * (x - y)).sum();
    Ok(sum / a.len() as f64)
}

/// `10·log₁₀(peak²/MSE)` in dB; `+∞` when the images are identical.
pub fn psnr(estimate: &Tensor, truth: &Tensor, peak: f64) -> Result<f64> {
    let e = mse(estimate, truth)?;
    if e == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (peak * peak / e).log10())
}

/// Arithmetic mean of PSNR values; infinite entries make the mean infinite.
pub fn mean_psnr(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}
