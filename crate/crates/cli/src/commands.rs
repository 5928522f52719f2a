use std::fs::{self, File};
use std::io::Write;
use std::path::{Path, PathBuf};

use veinseg_core::data::store::{load_dataset, load_folds, select, write_dataset, write_folds};
use veinseg_core::data::{gcn_normalize, kfold_split, read_pgm, synth_generate, write_pgm, FoldSplit, ImageSample, Plane};
use veinseg_core::eval::{prob_to_gray, render_overlay, Aggregation, EvalReport};
use veinseg_core::nn::gradcheck::{gradient_check, gradient_check_f32, GradOp, LayerCheck};
use veinseg_core::nn::{Shape, Tensor};
use veinseg_core::train::{
    evaluate_split, run_strategy_matrix, stream_rng, train_round, LogRecord, SeedStream, Strategy, ToyTotalLoss,
    TrainConfig,
};
use veinseg_core::unet::{Checkpoint, UNet, UNetConfig};

use crate::error::CliError;
use crate::manifest::RunManifest;
use crate::{EvalArgs, GradcheckArgs, Hyper, MatrixArgs, PredictArgs, RetrainArgs, SynthArgs, TrainArgs};

pub const CHECKPOINT_FILE: &str = "best.ckpt";
pub const LOG_FILE: &str = "train_log.jsonl";

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn to_json<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("plain data serializes")
}

fn read_checkpoint(path: &Path) -> Result<Checkpoint, CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    Checkpoint::from_bytes(&bytes).map_err(|e| CliError::io(path, e))
}

fn read_image(path: &Path) -> Result<Plane<u8>, CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    read_pgm(&bytes).map_err(|e| CliError::io(path, e))
}

fn load_fold(data: &Path, fold: usize) -> Result<(Vec<ImageSample>, FoldSplit), CliError> {
    let folds = load_folds(data)?;
    let split = folds
        .iter()
        .find(|f| f.fold_index == fold)
        .cloned()
        .ok_or_else(|| CliError::Config(format!("fold {fold} does not exist (folds are 0..{})", folds.len() - 1)))?;
    Ok((load_dataset(data)?, split))
}

fn train_config(h: &Hyper, seed: u64, strategy: Strategy, bra: bool, roi_crop: bool) -> Result<TrainConfig, CliError> {
    let config = TrainConfig {
        learning_rate: h.learning_rate,
        epochs: h.epochs,
        batch_size: h.batch_size,
        l2_scale: h.l2_scale,
        seed,
        strategy,
        bra,
        roi_crop,
        early_stop_patience: h.patience,
        train_resolution: None,
        expansion: h.expansion,
        optimizer: h.optimizer,
        aggregation: if h.pooled { Aggregation::Pooled } else { Aggregation::PerImage },
        max_steps: h.max_steps,
        model: UNetConfig::default().with_base_filters(h.base_filters),
    };
    config.validate()?;
    Ok(config)
}

pub fn synth(a: SynthArgs, seed: u64) -> Result<(), CliError> {
    let width = a.width.unwrap_or(a.size);
    let samples = synth_generate(a.count, a.size, width, seed)?;
    create_dir(&a.out)?;
    write_dataset(&a.out, &samples)?;
    let ids: Vec<String> = samples.iter().map(|s| s.id.clone()).collect();
    match kfold_split(&ids, &mut stream_rng(seed, SeedStream::Split)) {
        Ok(folds) => write_folds(&a.out, &folds)?,
        Err(e) => eprintln!("no fold manifest written: {e}"),
    }
    println!("wrote {} samples of {}x{} to {}", samples.len(), a.size, width, a.out.display());
    Ok(())
}

struct RoundJob<'a> {
    command: &'a str,
    data: PathBuf,
    fold: usize,
    out: PathBuf,
    config: TrainConfig,
    tongue_ckpt: Option<PathBuf>,
}

fn run_round(job: RoundJob<'_>) -> Result<(), CliError> {
    let (samples, split) = load_fold(&job.data, job.fold)?;
    let config = job.config;
    let mut model = UNet::build(config.model.clone(), &mut stream_rng(config.seed, SeedStream::Init))?;
    let tongue = match &job.tongue_ckpt {
        Some(path) => {
            let ck = read_checkpoint(path)?;
            let mut m = UNet::build_seeded(config.model.clone(), 0)?;
            m.load_checkpoint(&ck)?;
            Some(m)
        }
        None => None,
    };
    if config.strategy == Strategy::RetrainVein {
        let restored = tongue.as_ref().ok_or_else(|| CliError::Config("retrain_vein needs --tongue-ckpt".into()))?;
        model = restored.clone();
    }
    let train = select(&samples, &split.train)?;
    let val = select(&samples, &split.val)?;

    create_dir(&job.out)?;
    let manifest = RunManifest::start(job.command, config.seed, Some(&job.data), serde_json::json!({
        "fold": job.fold,
        "tongue_ckpt": job.tongue_ckpt,
        "train": config,
    }));
    manifest.write(&job.out)?;
    let log_path = job.out.join(LOG_FILE);
    let mut log = File::create(&log_path).map_err(|e| CliError::io(&log_path, e))?;
    let mut write_err = None;
    let outcome = train_round(&mut model, &train, &val, &config, tongue.as_ref(), &mut |r| {
        if let Err(e) = writeln!(log, "{}", serde_json::to_string(r).expect("plain record")) {
            write_err.get_or_insert(e);
        }
        if let LogRecord::Epoch(e) = r {
            eprintln!("epoch {:3}  val max IoU {:.4}{}", e.epoch, e.val_max_iou, if e.best { "  *" } else { "" });
        }
    })?;
    if let Some(e) = write_err {
        return Err(CliError::io(&log_path, e));
    }
    let ck_path = job.out.join(CHECKPOINT_FILE);
    fs::write(&ck_path, outcome.checkpoint.to_bytes()).map_err(|e| CliError::io(&ck_path, e))?;
    write_text(
        &job.out.join("summary.json"),
        &to_json(&serde_json::json!({
            "best_epoch": outcome.best_epoch,
            "best_val_max_iou": outcome.best_val,
            "epochs_run": outcome.epochs_run,
            "steps": outcome.steps,
        })),
    )?;
    manifest.finish(&job.out)?;
    println!("best epoch {} (val max IoU {:.4}); checkpoint {}", outcome.best_epoch, outcome.best_val, ck_path.display());
    Ok(())
}

pub fn train(a: TrainArgs, seed: u64) -> Result<(), CliError> {
    if a.strategy == Strategy::RetrainVein {
        return Err(CliError::Config("retrain_vein runs through `retrain --tongue-ckpt`".into()));
    }
    let config = train_config(&a.hyper, seed, a.strategy, a.bra, a.crop)?;
    run_round(RoundJob { command: "train", data: a.data, fold: a.fold, out: a.out, config, tongue_ckpt: None })
}

pub fn retrain(a: RetrainArgs, seed: u64) -> Result<(), CliError> {
    if a.strategy == Strategy::DirectTongue {
        return Err(CliError::Config("retrain trains on vein labels".into()));
    }
    if !a.tongue_ckpt.exists() {
        return Err(CliError::io(&a.tongue_ckpt, "tongue checkpoint not found"));
    }
    let config = train_config(&a.hyper, seed, a.strategy, a.bra, a.crop)?;
    run_round(RoundJob {
        command: "retrain",
        data: a.data,
        fold: a.fold,
        out: a.out,
        config,
        tongue_ckpt: Some(a.tongue_ckpt),
    })
}

pub fn predict(a: PredictArgs, seed: u64) -> Result<(), CliError> {
    if !(a.threshold > 0.0 && a.threshold < 1.0) {
        return Err(CliError::Config(format!("threshold {} outside (0, 1)", a.threshold)));
    }
    let model = UNet::<f32>::from_checkpoint(&read_checkpoint(&a.ckpt)?, UNetConfig::default())?;
    let raw = read_image(&a.image)?;
    let (h, w) = raw.dims();
    let x = gcn_normalize(&raw.map(f32::from));
    let input = Tensor::from_vec(Shape::new(1, 1, h, w), x.into_data())?;
    let prob = Plane::from_vec(h, w, model.predict(&input)?.into_data())?;
    create_dir(&a.out)?;
    let manifest = RunManifest::start("predict", seed, None, serde_json::json!({
        "ckpt": a.ckpt,
        "image": a.image,
        "threshold": a.threshold,
    }));
    let prob_path = a.out.join("probability.pgm");
    fs::write(&prob_path, write_pgm(&prob_to_gray(&prob))).map_err(|e| CliError::io(&prob_path, e))?;
    let overlay_path = a.out.join("overlay.pgm");
    let overlay = render_overlay(&raw, &prob, a.threshold)?;
    fs::write(&overlay_path, write_pgm(&overlay)).map_err(|e| CliError::io(&overlay_path, e))?;
    manifest.finish(&a.out)?;
    println!("wrote {} and {}", prob_path.display(), overlay_path.display());
    Ok(())
}

pub fn eval(a: EvalArgs, seed: u64) -> Result<(), CliError> {
    let model = UNet::<f32>::from_checkpoint(&read_checkpoint(&a.ckpt)?, UNetConfig::default())?;
    let (samples, split) = load_fold(&a.data, a.fold)?;
    let ids = match a.split.as_str() {
        "test" => &split.test,
        "val" => &split.val,
        "train" => &split.train,
        other => return Err(CliError::Config(format!("unknown split {other:?} (test, val or train)"))),
    };
    let chosen = select(&samples, ids)?;
    let mode = if a.pooled { Aggregation::Pooled } else { Aggregation::PerImage };
    let report = evaluate_split(&model, &chosen, a.target, chosen[0].dims(), mode)?;
    create_dir(&a.out)?;
    let manifest = RunManifest::start("eval", seed, Some(&a.data), serde_json::json!({
        "ckpt": a.ckpt,
        "split": a.split,
        "fold": a.fold,
        "target": a.target,
        "aggregation": mode,
    }));
    write_text(&a.out.join("eval_report.json"), &to_json(&report))?;
    write_text(&a.out.join("eval_report.csv"), &format!("{}\n{}\n", EvalReport::CSV_HEADER, report.csv_row()))?;
    manifest.finish(&a.out)?;
    println!("max IoU {:.4} at {:.2}, AIoU {:.4}, abs error {:.4}", report.max_iou, report.opt_threshold, report.aiou, report.abs_error);
    Ok(())
}

pub fn gradcheck(a: GradcheckArgs, seed: u64) -> Result<(), CliError> {
    let tol = if a.f32 { 1e-3 } else { 1e-6 };
    let run = |op: &dyn Fn() -> Result<veinseg_core::nn::GradCheck, veinseg_core::nn::NnError>, name: &str| {
        op().map(|r| {
            let ok = r.rel_error < tol;
            println!("{name:<22} rel {:.3e}  worst element {:.3e}  {}", r.rel_error, r.max_elementwise, if ok { "ok" } else { "FAIL" });
            ok
        })
    };
    let mut all_ok = true;
    for layer in LayerCheck::ALL {
        let shapes = layer.shapes();
        let check = || if a.f32 { gradient_check_f32(&layer, &shapes, seed) } else { gradient_check(&layer, &shapes, seed) };
        all_ok &= run(&check, layer.name())?;
    }
    let toy = ToyTotalLoss::default();
    let shapes = toy.shapes();
    let check = || if a.f32 { gradient_check_f32(&toy, &shapes, seed) } else { gradient_check(&toy, &shapes, seed) };
    all_ok &= run(&check, toy.name())?;
    if all_ok {
        Ok(())
    } else {
        Err(CliError::Numeric(format!("gradient check exceeded {tol:e}")))
    }
}

pub fn matrix(a: MatrixArgs, seed: u64) -> Result<(), CliError> {
    let samples = load_dataset(&a.data)?;
    let all = load_folds(&a.data)?;
    let folds: Vec<FoldSplit> = if a.folds.is_empty() {
        all
    } else {
        a.folds
            .iter()
            .map(|&k| {
                all.iter()
                    .find(|f| f.fold_index == k)
                    .cloned()
                    .ok_or_else(|| CliError::Config(format!("fold {k} does not exist")))
            })
            .collect::<Result<_, _>>()?
    };
    let base = train_config(&a.hyper, seed, Strategy::DirectTongue, false, false)?;
    create_dir(&a.out)?;
    let manifest = RunManifest::start("matrix", seed, Some(&a.data), serde_json::json!({
        "folds": folds.iter().map(|f| f.fold_index).collect::<Vec<_>>(),
        "jobs": a.jobs,
        "train": base,
    }));
    manifest.write(&a.out)?;
    let report = run_strategy_matrix(&samples, &folds, &base, a.jobs, &|c| {
        eprintln!(
            "{:<22} fold {}  test max IoU {:.4} at {:.2}  AIoU {:.4}  ({} epochs, {:.0}s)",
            c.strategy, c.fold, c.test.max_iou, c.test.opt_threshold, c.test.aiou, c.epochs_run, c.seconds
        );
    })?;
    write_text(&a.out.join("table.csv"), &report.to_csv())?;
    write_text(&a.out.join("cells.csv"), &report.cells_csv())?;
    write_text(&a.out.join("report.json"), &to_json(&report))?;
    manifest.finish(&a.out)?;
    print!("{}", report.to_csv());
    Ok(())
}
