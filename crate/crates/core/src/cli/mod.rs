//! Command-line front end: `gen`, `train`, `eval`, `solve-lasso`,
//! `count-params`.
//!
//! Exit statuses:
//!
//! | status | meaning |
//! |---|---|
//! | 0 | all outputs written |
//! | 1 | I/O failure |
//! | 2 | usage error, missing output directory, bad `EPN_THREADS` |
//! | 3 | malformed or truncated input file |
//! | 4 | checkpoint and data/flags describe different architectures |
//! | 5 | numerical failure (singular fit, degenerate sample, non-finite loss) |

mod commands;
mod meta;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::error::Error;
use crate::network::Variant;
use crate::solver::Algorithm;

pub use commands::{
    cmd_count_params, cmd_eval, cmd_gen, cmd_solve_lasso, cmd_train, stitch_tiles, tile_image, DataDir, EVAL_FILE, MANIFEST_FILE,
    MATRIX_FILE, PATCHES_FILE, Q0_FILE, TRACE_FILE,
};
pub use meta::{parse_meta, sha256_file, RunMeta, META_FILE};

#[derive(Debug, Parser)]
#[command(name = "epnet", version, about = "Compressive-sensing reconstruction with EP-Net / EPN-Net")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate Φ, a patch dataset and the Q₀ initializer.
    Gen(GenArgs),
    /// Train an unrolled network on a generated dataset.
    Train(TrainArgs),
    /// Evaluate a checkpoint; writes per-item PSNR and reconstructions.
    Eval(EvalArgs),
    /// Solve a seeded random Lasso instance and write the iteration trace.
    SolveLasso(LassoArgs),
    /// Print the number of learnable parameters.
    CountParams(CountArgs),
}

#[derive(Debug, Clone, Args)]
pub struct GenArgs {
    /// Pixels per patch (a perfect square).
    #[arg(long, default_value_t = 1089)]
    pub n: usize,
    #[arg(long, default_value_t = 0.25)]
    pub ratio: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Number of patches to crop.
    #[arg(long, default_value_t = 500)]
    pub patches: usize,
    /// Directory of PGM/PPM images (defaults to the bundled fixtures).
    #[arg(long)]
    pub images: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    #[arg(long, value_parser = parse_variant, default_value = "ep")]
    pub variant: Variant,
    #[arg(long, default_value_t = 3, value_parser = clap::value_parser!(u64).range(1..))]
    pub phases: u64,
    #[arg(long, default_value_t = 8, value_parser = clap::value_parser!(u64).range(1..))]
    pub nf: u64,
    /// Must match the ratio the data was generated with.
    #[arg(long)]
    pub ratio: Option<f64>,
    #[arg(long, default_value_t = 50)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1e-4)]
    pub lr: f64,
    #[arg(long, default_value_t = 16, value_parser = clap::value_parser!(u64).range(1..))]
    pub batch: u64,
    /// Checkpoint every N epochs (0 disables cadence checkpoints).
    #[arg(long, default_value_t = 10)]
    pub checkpoint_every: usize,
    /// Log wall_ms as 0 so that logs are byte-reproducible.
    #[arg(long)]
    pub no_wall_clock: bool,
    /// Full-scale preset: EPN, 7 phases, 32 channels, lr 1e-4.
    #[arg(long)]
    pub full: bool,
    /// Output directory of `gen`.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Split {
    Train,
    Holdout,
    All,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    /// Output directory of `gen`.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Which patches to evaluate.
    #[arg(long, value_enum, default_value = "holdout")]
    pub split: Split,
    /// Reconstruct whole images from this directory instead of patches,
    /// by non-overlapping zero-padded tiles.
    #[arg(long)]
    pub images: Option<PathBuf>,
    /// Expected architecture; a checkpoint that differs is rejected.
    #[arg(long, value_parser = parse_variant)]
    pub variant: Option<Variant>,
    #[arg(long)]
    pub phases: Option<usize>,
    #[arg(long)]
    pub nf: Option<usize>,
    /// Skip writing reconstructed PGMs.
    #[arg(long)]
    pub no_images: bool,
}

#[derive(Debug, Clone, Args)]
pub struct LassoArgs {
    #[arg(long, default_value_t = 20)]
    pub m: usize,
    #[arg(long, default_value_t = 50)]
    pub n: usize,
    #[arg(long, default_value_t = 0.1)]
    pub lambda: f64,
    #[arg(long, value_parser = parse_algo, default_value = "aepg")]
    pub algo: Algorithm,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 100_000)]
    pub max_iters: usize,
    #[arg(long, default_value_t = 1e-10)]
    pub tol: f64,
    /// Report time_ms as 0 so that traces are byte-reproducible.
    #[arg(long)]
    pub no_wall_clock: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct CountArgs {
    #[arg(long, value_parser = parse_variant, default_value = "epn")]
    pub variant: Variant,
    #[arg(long, default_value_t = 1)]
    pub phases: usize,
    #[arg(long, default_value_t = 32)]
    pub nf: usize,
}

fn parse_variant(s: &str) -> Result<Variant, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_algo(s: &str) -> Result<Algorithm, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

/// Failure of a command, carrying its exit status.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Lib(#[from] Error),
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Lib(Error::Io(e))
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Lib(e) => match e {
                Error::Io(_) | Error::Image(_) => 1,
                Error::InvalidArgument(_) | Error::Shape(_) => 2,
                Error::Format { .. } => 3,
                Error::ConfigMismatch { .. } => 4,
                Error::Singular { .. } | Error::Degenerate { .. } | Error::NonFinite { .. } => 5,
            },
        }
    }
}

/// Reads `EPN_THREADS` and sizes the global worker pool.
fn configure_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var("EPN_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Usage(format!("EPN_THREADS must be a positive integer, got `{raw}`")))?;
    // A second call in the same process keeps the first pool.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

pub fn dispatch(cli: Cli) -> Result<(), CliError> {
    configure_threads()?;
    match cli.command {
        Command::Gen(a) => cmd_gen(&a),
        Command::Train(a) => cmd_train(&a),
        Command::Eval(a) => cmd_eval(&a),
        Command::SolveLasso(a) => cmd_solve_lasso(&a),
        Command::CountParams(a) => {
            println!("{}", cmd_count_params(&a)?);
            Ok(())
        }
    }
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit status.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
