//! Central-difference check of the end-to-end loss gradient on a small EPN
//! model, over a handful of coordinates per tensor.

use epnet::network::{ModelConfig, ModelParams, Sensing, Variant};
use epnet::pipeline::{fixture_dir, load_dir, prepare};
use epnet::trainer::{loss, sample_loss_grad};

fn main() -> epnet::Result<()> {
    let images = load_dir(&fixture_dir())?;
    let prep = prepare(&images, 80, 9, 0.5, 2)?;
    let samples = prep.samples(&prep.train[..1])?;
    let sensing = Sensing::new(prep.matrix.phi.clone())?;
    let cfg = ModelConfig::new(Variant::Epn, 2, 4, 9, 9)?;
    let params = ModelParams::init(cfg, 5)?;
    let (_, grads) = sample_loss_grad(&params, &sensing, &samples[0])?;

    let h = 1e-5;
    let pixels = cfg.pixels() as f64;
    let mut worst: f64 = 0.0;
    for (t, grad) in grads.iter().enumerate() {
        let len = grad.len();
        for i in [0, len / 2, len - 1] {
            let eval = |delta: f64| {
                let mut p = params.clone();
                p.tensors_mut()[t].data_mut()[i] += delta;
                // `loss` averages over pixels; the sample gradient is of the plain sum.
                Ok::<_, epnet::Error>(loss(&p, &sensing, &samples)? * pixels)
            };
            let fd = (eval(h)? - eval(-h)?) / (2.0 * h);
            let an = grad.data()[i];
            let rel = (fd - an).abs() / (1e-4 * an.abs().max(fd.abs()) + 1e-8);
            worst = worst.max(rel);
        }
    }
    println!(
        "{} tensors checked, worst |fd - an| / (1e-4 scale + 1e-8) = {worst:.3}",
        grads.len()
    );
    Ok(())
}
