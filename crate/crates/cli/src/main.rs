//! `veinseg`: synthetic data, training, retraining, evaluation and the
//! strategy matrix from one binary.

mod commands;
mod error;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use veinseg_core::data::{ExpansionMode, Target};
use veinseg_core::train::{OptimizerKind, Strategy};

#[derive(Parser, Debug)]
#[command(name = "veinseg", version = manifest::VERSION, about = "Sublingual vein segmentation with two-round U-Net training")]
struct Cli {
    /// Seed for every random stream.
    #[arg(long, global = true, env = "VEINSEG_SEED", default_value_t = 0)]
    seed: u64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic dataset and its fold manifest.
    Synth(SynthArgs),
    /// First-round (or direct) training.
    Train(TrainArgs),
    /// Second-round training from a tongue checkpoint.
    Retrain(RetrainArgs),
    /// Probability map and overlay for one image.
    Predict(PredictArgs),
    /// Threshold sweep of a checkpoint on one split.
    Eval(EvalArgs),
    /// Finite-difference check of every layer and the composed loss.
    Gradcheck(GradcheckArgs),
    /// Every strategy row on the selected folds.
    Matrix(MatrixArgs),
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[arg(long, default_value_t = 26)]
    count: usize,
    /// Image height; also the width unless --width is given.
    #[arg(long, default_value_t = 64)]
    size: usize,
    #[arg(long)]
    width: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

fn parse_expansion(s: &str) -> Result<ExpansionMode, String> {
    match s {
        "full" => Ok(ExpansionMode::Full),
        "cycle" => Ok(ExpansionMode::Cycle),
        _ => Err(format!("expected full or cycle, got {s:?}")),
    }
}

fn parse_optimizer(s: &str) -> Result<OptimizerKind, String> {
    match s {
        "adam" => Ok(OptimizerKind::Adam),
        "sgd" => Ok(OptimizerKind::Sgd),
        _ => Err(format!("expected adam or sgd, got {s:?}")),
    }
}

fn parse_target(s: &str) -> Result<Target, String> {
    match s {
        "tongue" => Ok(Target::Tongue),
        "vein" => Ok(Target::Vein),
        _ => Err(format!("expected tongue or vein, got {s:?}")),
    }
}

#[derive(Args, Debug, Clone)]
struct Hyper {
    #[arg(long, default_value_t = 100)]
    epochs: usize,
    #[arg(long = "lr", default_value_t = 1e-4)]
    learning_rate: f64,
    #[arg(long, default_value_t = 2)]
    batch_size: usize,
    #[arg(long = "l2", default_value_t = 1e-4)]
    l2_scale: f64,
    #[arg(long, default_value_t = 15)]
    patience: usize,
    #[arg(long, default_value_t = 16)]
    base_filters: usize,
    /// Stop after this many optimizer steps.
    #[arg(long)]
    max_steps: Option<usize>,
    #[arg(long, default_value = "full", value_parser = parse_expansion)]
    expansion: ExpansionMode,
    #[arg(long, default_value = "adam", value_parser = parse_optimizer)]
    optimizer: OptimizerKind,
    /// Pool confusion counts over images instead of averaging IoU.
    #[arg(long)]
    pooled: bool,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = 0)]
    fold: usize,
    #[arg(long, default_value = "direct_tongue")]
    strategy: Strategy,
    #[arg(long)]
    bra: bool,
    #[arg(long)]
    crop: bool,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    hyper: Hyper,
}

#[derive(Args, Debug)]
struct RetrainArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = 0)]
    fold: usize,
    #[arg(long, default_value = "retrain_vein")]
    strategy: Strategy,
    #[arg(long)]
    tongue_ckpt: PathBuf,
    #[arg(long)]
    bra: bool,
    #[arg(long)]
    crop: bool,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    hyper: Hyper,
}

#[derive(Args, Debug)]
struct PredictArgs {
    #[arg(long)]
    ckpt: PathBuf,
    /// 8-bit binary PGM.
    #[arg(long)]
    image: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    threshold: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// test, val or train.
    #[arg(long, default_value = "test")]
    split: String,
    #[arg(long, default_value_t = 0)]
    fold: usize,
    #[arg(long, default_value = "vein", value_parser = parse_target)]
    target: Target,
    #[arg(long)]
    pooled: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct GradcheckArgs {
    /// Check 32-bit analytic gradients (tolerance 1e-3) instead of 64-bit.
    #[arg(long)]
    f32: bool,
}

#[derive(Args, Debug)]
struct MatrixArgs {
    #[arg(long)]
    data: PathBuf,
    /// Comma-separated fold indices; all folds when omitted.
    #[arg(long, value_delimiter = ',')]
    folds: Vec<usize>,
    /// Worker threads for the vein cells of each fold.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    hyper: Hyper,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let seed = cli.seed;
    let result = match cli.command {
        Command::Synth(a) => commands::synth(a, seed),
        Command::Train(a) => commands::train(a, seed),
        Command::Retrain(a) => commands::retrain(a, seed),
        Command::Predict(a) => commands::predict(a, seed),
        Command::Eval(a) => commands::eval(a, seed),
        Command::Gradcheck(a) => commands::gradcheck(a, seed),
        Command::Matrix(a) => commands::matrix(a, seed),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
