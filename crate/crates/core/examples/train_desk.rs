//! Desk-scale training run: 500 fixture patches, ratio 0.25, three EP phases
//! with 8 channels. Pass an epoch count to shorten the run.

use epnet::network::{count_params, ModelConfig, ModelParams, Sensing, Variant};
use epnet::pipeline::{fixture_dir, load_dir, prepare};
use epnet::trainer::{baseline, train, TrainConfig, LOG_HEADER};

fn main() -> epnet::Result<()> {
    let epochs = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(50);
    let images = load_dir(&fixture_dir())?;
    let prep = prepare(&images, 500, 33, 0.25, 7)?;
    let (tr, ho) = (prep.train_samples()?, prep.holdout_samples()?);
    let cfg = ModelConfig::new(Variant::Ep, 3, 8, 33, 33)?;
    println!("parameters: {}", count_params(&cfg));
    println!("Q₀y holdout PSNR {:.3} dB", baseline(&ho)?.mean_psnr);

    let tc = TrainConfig {
        epochs,
        ..TrainConfig::desk(7)
    };
    let sensing = Sensing::new(prep.matrix.phi.clone())?;
    let out = train(&tc, ModelParams::init(cfg, 7)?, &sensing, &tr, &ho, None)?;
    println!("{LOG_HEADER}");
    for row in &out.log {
        println!("{}", row.csv_line());
    }
    Ok(())
}
