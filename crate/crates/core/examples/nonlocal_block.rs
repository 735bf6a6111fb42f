//! Applies a freshly initialized non-local block to a random feature map and
//! checks that the similarity weights are row-stochastic.

use epnet::network::{apply_nonlocal, PhaseParams, Variant};
use epnet::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> epnet::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let nf = 4;
    let phase = PhaseParams::init(Variant::Epn, nf, &mut rng);
    let z = Tensor::from_fn([nf, 5, 5], |_| rng.random_range(-1.0..1.0));
    let (out, w) = apply_nonlocal(&phase, &z)?;
    let (rows, cols) = w.dims2()?;
    let worst = (0..rows)
        .map(|i| (w.data()[i * cols..(i + 1) * cols].iter().sum::<f64>() - 1.0).abs())
        .fold(0.0, f64::max);
    println!("weights {rows}x{cols}, worst row-sum error {worst:.2e}");
    println!("output {:?}, ‖out‖ = {:.6}", out.shape(), out.norm());
    Ok(())
}
