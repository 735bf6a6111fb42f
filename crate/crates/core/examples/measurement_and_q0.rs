//! Builds Φ and a patch set from the bundled images, fits Q₀ and reports the
//! starting PSNR on both splits.

use epnet::pipeline::{fixture_dir, load_dir, measure_columns, prepare, Initializer};
use epnet::trainer::baseline;

fn main() -> epnet::Result<()> {
    let images = load_dir(&fixture_dir())?;
    let prep = prepare(&images, 500, 33, 0.25, 7)?;
    println!(
        "Φ {}x{}, max |ΦΦᵀ − I| = {:.2e}",
        prep.matrix.rows(),
        prep.matrix.cols(),
        prep.matrix.orthonormality_error()
    );
    println!("manifest sha256 {}", prep.dataset.manifest_checksum());

    let x = prep.dataset.select(&prep.train).as_columns();
    let y = measure_columns(&prep.matrix.phi, &x)?;
    println!(
        "cond(YYᵀ) = {:.3e}, normal-equation residual {:.2e}, ‖Q₀Y − X‖_F = {:.4}",
        prep.init.condition,
        prep.init.normal_equation_residual(&x, &y)?,
        Initializer::frobenius_residual(&prep.init.q0, &x, &y)?
    );
    let train = baseline(&prep.train_samples()?)?;
    let holdout = baseline(&prep.holdout_samples()?)?;
    println!("Q₀y PSNR: train {:.3} dB, holdout {:.3} dB", train.mean_psnr, holdout.mean_psnr);
    Ok(())
}
