//! Reconstructs a whole fixture image tile by tile with a briefly trained
//! model and writes the Q₀y and network outputs as PGM files.

use epnet::cli::{stitch_tiles, tile_image};
use epnet::network::{ModelConfig, ModelParams, Sensing, Variant};
use epnet::pipeline::{fixture_dir, load_dir, make_samples, prepare, psnr, write_pgm};
use epnet::trainer::{reconstruct_sample, train, TrainConfig};
use epnet::Tensor;

fn main() -> epnet::Result<()> {
    let images = load_dir(&fixture_dir())?;
    let prep = prepare(&images, 500, 33, 0.25, 7)?;
    let sensing = Sensing::new(prep.matrix.phi.clone())?;
    let cfg = ModelConfig::new(Variant::Ep, 3, 8, 33, 33)?;
    let tc = TrainConfig {
        epochs: 3,
        ..TrainConfig::desk(7)
    };
    let out = train(&tc, ModelParams::init(cfg, 7)?, &sensing, &prep.train_samples()?, &[], None)?;

    let img = &images[0];
    let (tiles, _, cols) = tile_image(img, 33);
    let samples = make_samples(&prep.matrix.phi, &prep.init.q0, &tiles)?;
    let recon = samples
        .iter()
        .map(|s| reconstruct_sample(&out.params, &sensing, s))
        .collect::<epnet::Result<Vec<_>>>()?;
    let start: Vec<Tensor> = samples.iter().map(|s| s.x0.clone()).collect();
    let dir = std::env::temp_dir();
    for (name, parts) in [("q0", &start), ("net", &recon)] {
        let pixels = stitch_tiles(parts, cols, 33, img.width, img.height);
        let est = Tensor::new([1, img.height, img.width], pixels.clone())?;
        let truth = Tensor::new([1, img.height, img.width], img.pixels.clone())?;
        let path = dir.join(format!("{}_{name}.pgm", img.name.replace('.', "_")));
        write_pgm(&path, img.width, img.height, &pixels)?;
        println!("{name}: {:.3} dB -> {}", psnr(&est, &truth, 1.0)?, path.display());
    }
    Ok(())
}
