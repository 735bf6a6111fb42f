use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::tensor::Tensor;

/// Half-width of the Xavier uniform law.
pub fn xavier_bound(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

/// Draws `U(−b, b)` with `b = √(6/(fan_in + fan_out))`. For convolution
/// kernels the fans are `channels · k²`.
///
/// # Panics
///
/// If both fans are zero.
pub fn xavier_uniform(shape: &[usize], fan_in: usize, fan_out: usize, rng: &mut ChaCha8Rng) -> Tensor {
    assert!(fan_in + fan_out > 0, "xavier_uniform needs a positive fan");
    let b = xavier_bound(fan_in, fan_out);
    Tensor::from_fn(shape.to_vec(), |_| rng.random_range(-b..b))
}
