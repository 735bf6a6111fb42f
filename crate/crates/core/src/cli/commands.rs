use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::DVector;

use super::meta::RunMeta;
use super::{CliError, CountArgs, EvalArgs, GenArgs, LassoArgs, Split, TrainArgs};
use crate::error::Error;
use crate::network::{count_params, Checkpoint, ModelConfig, ModelParams, Sensing, Variant};
use crate::pipeline::{
    load_dir, load_image, make_samples, mean_psnr, psnr, split_holdout, write_pgm,
    Container, GrayImage, Initializer, MeasurementMatrix, PatchDataset, Sample,
};
use crate::solver::{run, LassoInstance, SolverConfig, StopReason};
use crate::tensor::Tensor;
use crate::trainer::{self, TrainConfig};

pub const MATRIX_FILE: &str = "phi.bin";
pub const Q0_FILE: &str = "q0.bin";
pub const PATCHES_FILE: &str = "patches.bin";
pub const MANIFEST_FILE: &str = "manifest.txt";
pub const EVAL_FILE: &str = "eval.csv";
pub const TRACE_FILE: &str = "trace.csv";

fn require_dir(dir: &Path) -> Result<(), CliError> {
    if dir.is_dir() {
        Ok(())
    } else {
        Err(CliError::Usage(format!(
            "output directory {} does not exist",
            dir.display()
        )))
    }
}

fn patch_side(n: usize) -> Result<usize, CliError> {
    let side = (n as f64).sqrt().round() as usize;
    if side == 0 || side * side != n {
        return Err(CliError::Usage(format!("--n must be a positive perfect square, got {n}")));
    }
    Ok(side)
}

pub fn cmd_gen(a: &GenArgs) -> Result<(), CliError> {
    require_dir(&a.out)?;
    let size = patch_side(a.n)?;
    let image_dir = a.images.clone().unwrap_or_else(crate::pipeline::fixture_dir);
    let images = load_dir(&image_dir)?;
    let prep = crate::pipeline::prepare(&images, a.patches, size, a.ratio, a.seed)?;

    let matrix_path = a.out.join(MATRIX_FILE);
    let q0_path = a.out.join(Q0_FILE);
    let patches_path = a.out.join(PATCHES_FILE);
    let manifest_path = a.out.join(MANIFEST_FILE);
    prep.matrix.to_container().write(&matrix_path)?;
    prep.init.to_container().write(&q0_path)?;
    prep.dataset.to_container().write(&patches_path)?;
    fs::write(&manifest_path, prep.dataset.manifest_text())?;

    let mut meta = RunMeta::new("gen");
    meta.set("n", a.n)
        .set("patch_size", size)
        .set("ratio", a.ratio)
        .set("m", prep.matrix.rows())
        .set("m_rule", "round(ratio * n)")
        .set("seed", a.seed)
        .set("patches", prep.dataset.len())
        .set("images", image_dir.display())
        .set("train_patches", prep.train.len())
        .set("holdout_patches", prep.holdout.len())
        .set("intensity_range", "[0, 1]")
        .set("phi_orthonormality_error", format!("{:e}", prep.matrix.orthonormality_error()))
        .set("q0_condition", format!("{:e}", prep.init.condition))
        .set("manifest_sha256", prep.dataset.manifest_checksum());
    meta.artifact(&matrix_path)
        .artifact(&q0_path)
        .artifact(&patches_path)
        .artifact(&manifest_path);
    meta.write(&a.out)?;
    log::info!(
        "wrote Φ {}x{}, {} patches, Q0 to {}",
        prep.matrix.rows(),
        prep.matrix.cols(),
        prep.dataset.len(),
        a.out.display()
    );
    Ok(())
}

/// Artifacts of a `gen` run.
pub struct DataDir {
    pub matrix: MeasurementMatrix,
    pub init: Initializer,
    pub dataset: PatchDataset,
    pub train: Vec<usize>,
    pub holdout: Vec<usize>,
}

impl DataDir {
    pub fn load(dir: &Path) -> Result<Self, CliError> {
        let mp = dir.join(MATRIX_FILE);
        let matrix = MeasurementMatrix::from_container(&Container::read_kind(&mp, "matrix")?, &mp)?;
        let qp = dir.join(Q0_FILE);
        let init = Initializer::from_container(&Container::read_kind(&qp, "q0")?, &qp)?;
        let pp = dir.join(PATCHES_FILE);
        let manifest = fs::read_to_string(dir.join(MANIFEST_FILE))?;
        let dataset = PatchDataset::from_parts(&Container::read_kind(&pp, "patches")?, &manifest, &pp)?;
        let n = dataset.size * dataset.size;
        if matrix.cols() != n || init.q0.shape() != [n, matrix.rows()] {
            return Err(Error::Format {
                path: dir.to_path_buf(),
                reason: format!(
                    "inconsistent data: Φ {}x{}, Q0 {:?}, patches {}x{}",
                    matrix.rows(),
                    matrix.cols(),
                    init.q0.shape(),
                    dataset.size,
                    dataset.size
                ),
            }
            .into());
        }
        let (train, holdout) = split_holdout(dataset.len(), dataset.seed);
        Ok(Self {
            matrix,
            init,
            dataset,
            train,
            holdout,
        })
    }

    pub fn samples(&self, indices: &[usize]) -> Result<Vec<Sample>, CliError> {
        let patches: Vec<Tensor> = indices.iter().map(|&i| self.dataset.patches[i].clone()).collect();
        Ok(make_samples(&self.matrix.phi, &self.init.q0, &patches)?)
    }

    pub fn indices(&self, split: Split) -> Vec<usize> {
        match split {
            Split::Train => self.train.clone(),
            Split::Holdout => self.holdout.clone(),
            Split::All => (0..self.dataset.len()).collect(),
        }
    }
}

pub fn cmd_train(a: &TrainArgs) -> Result<(), CliError> {
    require_dir(&a.out)?;
    let data = DataDir::load(&a.data)?;
    if let Some(r) = a.ratio {
        if (r - data.matrix.ratio).abs() > 1e-12 {
            return Err(Error::ConfigMismatch {
                expected: format!("ratio={r}"),
                found: format!("ratio={} in {}", data.matrix.ratio, a.data.display()),
            }
            .into());
        }
    }
    let (variant, phases, nf, lr) = if a.full {
        log::info!("full preset: EPN, 7 phases, 32 channels, lr 1e-4");
        (Variant::Epn, 7, 32, 1e-4)
    } else {
        (a.variant, a.phases as usize, a.nf as usize, a.lr)
    };
    let size = data.dataset.size;
    let config = ModelConfig::new(variant, phases, nf, size, size).map_err(|e| CliError::Usage(e.to_string()))?;
    let count = count_params(&config);
    println!("parameters: {count}");

    let cfg = TrainConfig {
        epochs: a.epochs,
        batch_size: a.batch as usize,
        lr,
        seed: a.seed,
        checkpoint_every: a.checkpoint_every,
        wall_clock: !a.no_wall_clock,
        ..TrainConfig::default()
    };
    let train = data.samples(&data.train)?;
    let holdout = data.samples(&data.holdout)?;
    let sensing = Sensing::new(data.matrix.phi.clone())?;
    let init = ModelParams::init(config, a.seed)?;
    let outcome = trainer::train(&cfg, init, &sensing, &train, &holdout, Some(&a.out))?;

    let mut meta = RunMeta::new("train");
    meta.set("variant", variant)
        .set("phases", phases)
        .set("nf", nf)
        .set("patch_size", size)
        .set("ratio", data.matrix.ratio)
        .set("parameters", count)
        .set("epochs", cfg.epochs)
        .set("batch_size", cfg.batch_size)
        .set("lr", cfg.lr)
        .set("adam", "beta1=0.9 beta2=0.999 eps=1e-8")
        .set(
            "plateau",
            format!(
                "factor={} patience={} threshold={}",
                cfg.plateau_factor, cfg.plateau_patience, cfg.plateau_threshold
            ),
        )
        .set("seed", cfg.seed)
        .set("data", a.data.display())
        .set("train_patches", train.len())
        .set("holdout_patches", holdout.len())
        .set("wall_clock", cfg.wall_clock)
        .set("full_preset", a.full);
    if let Some(last) = outcome.log.last() {
        meta.set("final_train_loss", last.train_loss)
            .set("final_holdout_psnr", last.holdout_psnr)
            .set("final_lr", outcome.adam.lr);
    }
    for p in &outcome.artifacts {
        meta.artifact(p);
    }
    meta.write(&a.out)?;
    Ok(())
}

/// Splits an image into non-overlapping `size × size` tiles, zero-padding the
/// right and bottom borders. Returns the tiles and the tile grid.
pub fn tile_image(img: &GrayImage, size: usize) -> (Vec<Tensor>, usize, usize) {
    let cols = img.width.div_ceil(size);
    let rows = img.height.div_ceil(size);
    let mut tiles = Vec::with_capacity(rows * cols);
    for ty in 0..rows {
        for tx in 0..cols {
            let t = Tensor::from_fn([1, size, size], |i| {
                let (y, x) = (ty * size + i / size, tx * size + i % size);
                if x < img.width && y < img.height {
                    img.at(x, y)
                } else {
                    0.0
                }
            });
            tiles.push(t);
        }
    }
    (tiles, rows, cols)
}

/// Inverse of [`tile_image`], cropping to `width × height`.
pub fn stitch_tiles(tiles: &[Tensor], cols: usize, size: usize, width: usize, height: usize) -> Vec<f64> {
    let mut out = vec![0.0; width * height];
    for y in 0..height {
        for x in 0..width {
            let t = &tiles[(y / size) * cols + x / size];
            out[y * width + x] = t.data()[(y % size) * size + x % size];
        }
    }
    out
}

pub fn cmd_eval(a: &EvalArgs) -> Result<(), CliError> {
    require_dir(&a.out)?;
    // The checkpoint is fully read and validated before any data is touched.
    let ck = Checkpoint::load(&a.ckpt)?;
    let found = ck.params.config;
    let data = DataDir::load(&a.data)?;
    let size = data.dataset.size;
    let expected = ModelConfig {
        variant: a.variant.unwrap_or(found.variant),
        phases: a.phases.unwrap_or(found.phases),
        nf: a.nf.unwrap_or(found.nf),
        height: size,
        width: size,
    };
    ck.check_config(&expected)?;
    let sensing = Sensing::new(data.matrix.phi.clone())?;
    let params = &ck.params;

    let mut csv = String::from("item,source,x,y,psnr_q0,psnr\n");
    let (mut base, mut model) = (Vec::new(), Vec::new());
    let mut written = Vec::new();
    let recon_dir = a.out.join("recon");
    if !a.no_images {
        fs::create_dir_all(&recon_dir)?;
    }
    let loss;
    if let Some(dir) = &a.images {
        let images = if dir.is_dir() { load_dir(dir)? } else { vec![load_image(dir)?] };
        let mut sq = 0.0;
        let mut pixels = 0usize;
        for img in &images {
            let (tiles, _, cols) = tile_image(img, size);
            let samples = make_samples(&data.matrix.phi, &data.init.q0, &tiles)?;
            let mut recon = Vec::with_capacity(samples.len());
            let mut start = Vec::with_capacity(samples.len());
            for s in &samples {
                recon.push(trainer::reconstruct_sample(params, &sensing, s)?);
                start.push(s.x0.clone());
            }
            let full = stitch_tiles(&recon, cols, size, img.width, img.height);
            let full0 = stitch_tiles(&start, cols, size, img.width, img.height);
            let truth = Tensor::new([1, img.height, img.width], img.pixels.clone())?;
            let xh = Tensor::new([1, img.height, img.width], full.clone())?;
            let x0 = Tensor::new([1, img.height, img.width], full0)?;
            let (p0, p) = (psnr(&x0, &truth, 1.0)?, psnr(&xh, &truth, 1.0)?);
            let err = xh.sub(&truth)?;
            sq += err.dot(&err)?;
            pixels += truth.len();
            writeln!(csv, "{},{},0,0,{},{}", base.len(), img.name, p0, p).expect("write to String");
            base.push(p0);
            model.push(p);
            if !a.no_images {
                let stem = Path::new(&img.name).file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
                let path = recon_dir.join(format!("{stem}_recon.pgm"));
                write_pgm(&path, img.width, img.height, &full)?;
                written.push(path);
            }
        }
        loss = sq / pixels as f64;
    } else {
        let idx = data.indices(a.split);
        let samples = data.samples(&idx)?;
        if samples.is_empty() {
            return Err(CliError::Usage("the selected split is empty".into()));
        }
        let ev = trainer::evaluate(params, &sensing, &samples)?;
        let b = trainer::baseline(&samples)?;
        for (k, &i) in idx.iter().enumerate() {
            let r = &data.dataset.manifest[i];
            writeln!(csv, "{i},{},{},{},{},{}", r.source, r.x, r.y, b.psnr[k], ev.psnr[k]).expect("write to String");
            if !a.no_images {
                let xh = trainer::reconstruct_sample(params, &sensing, &samples[k])?;
                let path = recon_dir.join(format!("patch_{i:05}.pgm"));
                write_pgm(&path, size, size, xh.data())?;
                written.push(path);
            }
        }
        base = b.psnr;
        model = ev.psnr;
        loss = ev.loss;
    }
    let (mb, mm) = (mean_psnr(&base), mean_psnr(&model));
    writeln!(csv, "mean,,,,{mb},{mm}").expect("write to String");
    let csv_path = a.out.join(EVAL_FILE);
    fs::write(&csv_path, &csv)?;
    println!("mean PSNR {mm:.4} dB (Q0 start {mb:.4} dB) over {} items", model.len());

    let mut meta = RunMeta::new("eval");
    meta.set("checkpoint", a.ckpt.display())
        .set("model", found.fingerprint())
        .set("data", a.data.display())
        .set("items", model.len())
        .set("split", format!("{:?}", a.split).to_lowercase())
        .set("tiling", if a.images.is_some() { "non-overlapping, zero-padded" } else { "none" })
        .set("loss", loss)
        .set("mean_psnr", mm)
        .set("mean_psnr_q0", mb);
    meta.artifact(&csv_path);
    for p in written {
        meta.artifact(p);
    }
    meta.write(&a.out)?;
    Ok(())
}

pub fn cmd_solve_lasso(a: &LassoArgs) -> Result<(), CliError> {
    require_dir(&a.out)?;
    if !(a.lambda >= 0.0) {
        return Err(CliError::Usage(format!("--lambda must be non-negative, got {}", a.lambda)));
    }
    let inst = LassoInstance::random(a.m, a.n, a.lambda, a.seed)?;
    let problem = inst.problem()?;
    let lip = inst.lipschitz();
    let step = 1.0 / lip;
    let cfg = SolverConfig {
        max_iters: a.max_iters,
        rel_tol: a.tol,
        wall_clock: !a.no_wall_clock,
        ..SolverConfig::default()
    };
    let x0 = DVector::zeros(a.n);
    let trace = run(a.algo, &problem, &x0, step, &cfg)?;
    let trace_path = a.out.join(TRACE_FILE);
    fs::write(&trace_path, trace.to_csv())?;
    let grad = inst.a.transpose() * (&inst.a * &trace.x - &inst.b);

    let mut meta = RunMeta::new("solve-lasso");
    meta.set("m", a.m)
        .set("n", a.n)
        .set("lambda", a.lambda)
        .set("algo", format!("{:?}", a.algo).to_lowercase())
        .set("seed", a.seed)
        .set("lipschitz", lip)
        .set("step", step)
        .set("max_iters", a.max_iters)
        .set("rel_tol", a.tol)
        .set("iterations", trace.entries.len() - 1)
        .set(
            "stop",
            match trace.stop {
                StopReason::MaxIters => "max_iters",
                StopReason::Tolerance => "tolerance",
            },
        )
        .set("final_objective", format!("{:.17e}", trace.final_objective()))
        .set("smooth_gradient_norm", format!("{:e}", grad.norm()));
    meta.artifact(&trace_path);
    meta.write(&a.out)?;
    println!("{:.12e}", trace.final_objective());
    Ok(())
}

pub fn cmd_count_params(a: &CountArgs) -> Result<usize, CliError> {
    let cfg = ModelConfig::new(a.variant, a.phases, a.nf, 33, 33).map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(count_params(&cfg))
}
