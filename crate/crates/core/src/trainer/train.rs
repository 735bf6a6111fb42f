use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::adam::{adam_step, AdamState};
use crate::autodiff::Graph;
use crate::error::{invalid, Error, Result};
use crate::network::{model_forward, Checkpoint, ModelParams, PhaseVars, Sensing};
use crate::pipeline::{mean_psnr, psnr, Sample};
use crate::tensor::Tensor;

pub const LOG_HEADER: &str = "epoch,step,train_loss,holdout_psnr,lr,wall_ms";
pub const LOG_FILE: &str = "train_log.csv";
pub const FINAL_CHECKPOINT: &str = "model.ckpt";

/// Builds the per-sample graph; returns it with the parameter handles and the
/// scalar `‖x̂ − x‖²`.
fn sample_graph(
    params: &ModelParams,
    sensing: &Sensing,
    sample: &Sample,
    trainable: bool,
) -> Result<(Graph, Vec<PhaseVars>, crate::autodiff::Var)> {
    let cfg = &params.config;
    let mut g = Graph::new();
    let phases: Vec<PhaseVars> = params.phases.iter().map(|p| p.attach(&mut g, trainable)).collect();
    let s = sensing.attach(&mut g, &sample.y)?;
    let x0 = g.constant(sample.x0.reshape([1, cfg.height, cfg.width])?);
    let truth = g.constant(sample.x.reshape([1, cfg.height, cfg.width])?);
    let out = model_forward(&mut g, cfg, &phases, &s, x0)?;
    let diff = g.sub(out, truth)?;
    let sq = g.sum_squares(diff);
    Ok((g, phases, sq))
}

/// `‖x̂ − x‖²` for one sample and its gradient for every parameter tensor, in
/// [`ModelParams::tensors`] order.
pub fn sample_loss_grad(params: &ModelParams, sensing: &Sensing, sample: &Sample) -> Result<(f64, Vec<Tensor>)> {
    let (mut g, phases, sq) = sample_graph(params, sensing, sample, true)?;
    g.backward(sq)?;
    let value = g.value(sq).item()?;
    let grads = phases
        .iter()
        .flat_map(|p| p.vars())
        .map(|v| g.grad_or_zero(v))
        .collect();
    Ok((value, grads))
}

/// Batch loss `(1/(P·N)) Σ ‖x̂_p − x_p‖²` and its gradient. Samples are
/// evaluated in parallel and reduced in batch order.
pub fn batch_loss_grad(params: &ModelParams, sensing: &Sensing, batch: &[&Sample]) -> Result<(f64, Vec<Tensor>)> {
    if batch.is_empty() {
        return invalid("loss of an empty batch");
    }
    let per: Vec<(f64, Vec<Tensor>)> = batch
        .par_iter()
        .map(|s| sample_loss_grad(params, sensing, s))
        .collect::<Result<_>>()?;
    let scale = 1.0 / (batch.len() * params.config.pixels()) as f64;
    let mut iter = per.into_iter();
    let (mut total, mut grads) = iter.next().expect("non-empty batch");
    for (v, g) in iter {
        total += v;
        for (acc, gi) in grads.iter_mut().zip(&g) {
            acc.add_assign(gi)?;
        }
    }
    for g in &mut grads {
        *g = g.scale(scale);
    }
    Ok((total * scale, grads))
}

/// Reconstruction of one sample (no gradients).
pub fn reconstruct_sample(params: &ModelParams, sensing: &Sensing, sample: &Sample) -> Result<Tensor> {
    let cfg = &params.config;
    let mut g = Graph::new();
    let phases: Vec<PhaseVars> = params.phases.iter().map(|p| p.attach(&mut g, false)).collect();
    let s = sensing.attach(&mut g, &sample.y)?;
    let x0 = g.constant(sample.x0.reshape([1, cfg.height, cfg.width])?);
    let out = model_forward(&mut g, cfg, &phases, &s, x0)?;
    Ok(g.value(out).clone())
}

/// Mean-squared reconstruction loss over `samples`.
pub fn loss(params: &ModelParams, sensing: &Sensing, samples: &[Sample]) -> Result<f64> {
    Ok(evaluate(params, sensing, samples)?.loss)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    /// `(1/(P·N)) Σ ‖x̂_p − x_p‖²`
    pub loss: f64,
    pub psnr: Vec<f64>,
    pub mean_psnr: f64,
}

fn summarize(errors: &[f64], psnrs: Vec<f64>, pixels: usize) -> Evaluation {
    Evaluation {
        loss: errors.iter().sum::<f64>() / (errors.len() * pixels) as f64,
        mean_psnr: mean_psnr(&psnrs),
        psnr: psnrs,
    }
}

/// Loss and per-sample PSNR (peak 1) of the model on `samples`.
pub fn evaluate(params: &ModelParams, sensing: &Sensing, samples: &[Sample]) -> Result<Evaluation> {
    if samples.is_empty() {
        return invalid("evaluation needs at least one sample");
    }
    let out: Vec<(f64, f64)> = samples
        .par_iter()
        .map(|s| {
            let xh = reconstruct_sample(params, sensing, s)?;
            let x = s.x.reshape(xh.shape())?;
            let err = xh.sub(&x)?;
            Ok((err.dot(&err)?, psnr(&xh, &x, 1.0)?))
        })
        .collect::<Result<_>>()?;
    let (errs, ps): (Vec<f64>, Vec<f64>) = out.into_iter().unzip();
    Ok(summarize(&errs, ps, params.config.pixels()))
}

/// The same metrics for the `Q₀y` starting point.
pub fn baseline(samples: &[Sample]) -> Result<Evaluation> {
    if samples.is_empty() {
        return invalid("evaluation needs at least one sample");
    }
    let mut errs = Vec::with_capacity(samples.len());
    let mut ps = Vec::with_capacity(samples.len());
    for s in samples {
        let x = s.x.reshape(s.x0.shape())?;
        let err = s.x0.sub(&x)?;
        errs.push(err.dot(&err)?);
        ps.push(psnr(&s.x0, &x, 1.0)?);
    }
    Ok(summarize(&errs, ps, samples[0].x.len()))
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
    /// Write `ckpt_epoch_NNNN.ckpt` every this many epochs (0 disables).
    pub checkpoint_every: usize,
    pub plateau_patience: usize,
    /// Relative improvement below which an epoch counts toward the plateau.
    pub plateau_threshold: f64,
    pub plateau_factor: f64,
    /// When false, `wall_ms` is logged as 0 so logs are byte-reproducible.
    pub wall_clock: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            batch_size: 16,
            lr: 1e-4,
            seed: 0,
            checkpoint_every: 10,
            plateau_patience: 5,
            plateau_threshold: 1e-3,
            plateau_factor: 0.5,
            wall_clock: true,
        }
    }
}

/// Learning rate of the desk-scale run, chosen by a 10-epoch pilot over
/// {1e-4, 1e-3, 3e-3}.
pub const DESK_LR: f64 = 3e-3;

impl TrainConfig {
    /// Desk-scale preset: 50 epochs at [`DESK_LR`].
    pub fn desk(seed: u64) -> Self {
        Self {
            lr: DESK_LR,
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return invalid("batch size must be positive");
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return invalid(format!("learning rate must be finite and non-negative, got {}", self.lr));
        }
        if !(self.plateau_factor > 0.0 && self.plateau_factor <= 1.0) {
            return invalid("plateau factor must lie in (0, 1]");
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LogRow {
    pub epoch: usize,
    pub step: u64,
    /// Epoch 0: loss of the initial model on the training set. Later epochs:
    /// sample-weighted mean of the batch losses seen during the epoch.
    pub train_loss: f64,
    pub holdout_psnr: f64,
    pub lr: f64,
    pub wall_ms: u128,
}

impl LogRow {
    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.epoch, self.step, self.train_loss, self.holdout_psnr, self.lr, self.wall_ms
        )
    }

    pub fn parse(line: &str) -> Option<Self> {
        let f: Vec<&str> = line.trim().split(',').collect();
        if f.len() != 6 {
            return None;
        }
        Some(Self {
            epoch: f[0].parse().ok()?,
            step: f[1].parse().ok()?,
            train_loss: f[2].parse().ok()?,
            holdout_psnr: f[3].parse().ok()?,
            lr: f[4].parse().ok()?,
            wall_ms: f[5].parse().ok()?,
        })
    }
}

/// Parses a metric log written by [`train`].
pub fn read_log(path: &Path) -> Result<Vec<LogRow>> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    if lines.next() != Some(LOG_HEADER) {
        return Err(Error::Format {
            path: path.to_path_buf(),
            reason: format!("expected header `{LOG_HEADER}`"),
        });
    }
    lines
        .enumerate()
        .map(|(i, l)| {
            LogRow::parse(l).ok_or_else(|| Error::Format {
                path: path.to_path_buf(),
                reason: format!("bad row {}", i + 2),
            })
        })
        .collect()
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub params: ModelParams,
    pub log: Vec<LogRow>,
    pub adam: AdamState,
    /// Files written, in order.
    pub artifacts: Vec<PathBuf>,
}

struct Sink {
    dir: PathBuf,
    csv: BufWriter<File>,
}

fn holdout_metric(params: &ModelParams, sensing: &Sensing, holdout: &[Sample]) -> Result<f64> {
    if holdout.is_empty() {
        Ok(f64::NAN)
    } else {
        Ok(evaluate(params, sensing, holdout)?.mean_psnr)
    }
}

/// Mini-batch Adam on the mean squared reconstruction loss.
///
/// Each epoch shuffles `train` with a seeded stream, steps once per batch,
/// then logs the mean training loss and the held-out mean PSNR. The learning
/// rate is multiplied by `plateau_factor` after `plateau_patience`
/// consecutive epochs without a relative improvement of `plateau_threshold`.
/// When `out_dir` is given, the CSV log, cadence checkpoints and the final
/// `model.ckpt` are written there.
pub fn train(
    cfg: &TrainConfig,
    init: ModelParams,
    sensing: &Sensing,
    train: &[Sample],
    holdout: &[Sample],
    out_dir: Option<&Path>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train.is_empty() {
        return invalid("training set is empty");
    }
    let start = Instant::now();
    let elapsed = || if cfg.wall_clock { start.elapsed().as_millis() } else { 0 };

    let mut params = init;
    let mut adam = AdamState::new(params.tensors(), cfg.lr);
    let mut artifacts = Vec::new();
    let mut sink = match out_dir {
        Some(dir) => {
            let path = dir.join(LOG_FILE);
            let mut csv = BufWriter::new(File::create(&path)?);
            writeln!(csv, "{LOG_HEADER}")?;
            artifacts.push(path);
            Some(Sink {
                dir: dir.to_path_buf(),
                csv,
            })
        }
        None => None,
    };
    let mut log = Vec::new();
    let mut emit = |row: LogRow, sink: &mut Option<Sink>| -> Result<()> {
        log::info!(
            "epoch {:>3}  loss {:.6e}  holdout {:.3} dB  lr {:.2e}",
            row.epoch,
            row.train_loss,
            row.holdout_psnr,
            row.lr
        );
        if let Some(s) = sink {
            writeln!(s.csv, "{}", row.csv_line())?;
            s.csv.flush()?;
        }
        log.push(row);
        Ok(())
    };

    let initial = evaluate(&params, sensing, train)?.loss;
    emit(
        LogRow {
            epoch: 0,
            step: 0,
            train_loss: initial,
            holdout_psnr: holdout_metric(&params, sensing, holdout)?,
            lr: adam.lr,
            wall_ms: elapsed(),
        },
        &mut sink,
    )?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut best = initial;
    let mut stale = 0;
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut sum = 0.0;
        for (bi, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let batch: Vec<&Sample> = chunk.iter().map(|&i| &train[i]).collect();
            let (l, grads) = batch_loss_grad(&params, sensing, &batch)?;
            if !l.is_finite() || grads.iter().any(|g| !g.is_finite()) {
                return Err(Error::NonFinite { epoch, batch: bi });
            }
            adam_step(&mut params.tensors_mut(), &grads, &mut adam)?;
            sum += l * chunk.len() as f64;
        }
        let epoch_loss = sum / train.len() as f64;
        let lr_used = adam.lr;

        if epoch_loss < best * (1.0 - cfg.plateau_threshold) {
            best = epoch_loss;
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.plateau_patience {
                adam.lr *= cfg.plateau_factor;
                stale = 0;
                log::info!("plateau: learning rate now {:.3e}", adam.lr);
            }
        }

        emit(
            LogRow {
                epoch,
                step: adam.t,
                train_loss: epoch_loss,
                holdout_psnr: holdout_metric(&params, sensing, holdout)?,
                lr: lr_used,
                wall_ms: elapsed(),
            },
            &mut sink,
        )?;
        if let Some(s) = &sink {
            if cfg.checkpoint_every > 0 && epoch % cfg.checkpoint_every == 0 {
                let path = s.dir.join(format!("ckpt_epoch_{epoch:04}.ckpt"));
                Checkpoint {
                    params: params.clone(),
                    seed: cfg.seed,
                }
                .save(&path)?;
                artifacts.push(path);
            }
        }
    }

    if let Some(s) = &sink {
        let path = s.dir.join(FINAL_CHECKPOINT);
        Checkpoint {
            params: params.clone(),
            seed: cfg.seed,
        }
        .save(&path)?;
        artifacts.push(path);
    }
    Ok(TrainOutcome {
        params,
        log,
        adam,
        artifacts,
    })
}
