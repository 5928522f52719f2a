//! One training round: epochs of augmented batches, validation after each
//! epoch, best-checkpoint tracking and early stopping.

use serde::{Deserialize, Serialize};

use super::loss::total_loss;
use super::{stream_rng, Optimizer, PipelineMode, SampleTransform, SeedStream, TrainConfig, TrainError};
use crate::data::{expand_epoch_plan, ImageSample, Mask, Plane, Target};
use crate::eval::{predict_planes, threshold_sweep, Aggregation, EvalReport};
use crate::nn::{Graph, Shape, Tensor};
use crate::unet::{Checkpoint, UNet};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub total: f64,
    pub ce: f64,
    pub l2: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub val_max_iou: f64,
    /// Whether this epoch produced the kept checkpoint so far.
    pub best: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LogRecord {
    Step(StepRecord),
    Epoch(EpochRecord),
}

/// Step and epoch records in the order they were produced.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub records: Vec<LogRecord>,
    pub best_epoch: Option<usize>,
}

impl TrainLog {
    pub fn steps(&self) -> impl Iterator<Item = &StepRecord> {
        self.records.iter().filter_map(|r| match r {
            LogRecord::Step(s) => Some(s),
            LogRecord::Epoch(_) => None,
        })
    }

    pub fn epochs(&self) -> impl Iterator<Item = &EpochRecord> {
        self.records.iter().filter_map(|r| match r {
            LogRecord::Epoch(e) => Some(e),
            LogRecord::Step(_) => None,
        })
    }

    /// One JSON object per line.
    pub fn to_jsonl(&self) -> String {
        self.records.iter().map(|r| serde_json::to_string(r).expect("plain record") + "\n").collect()
    }
}

#[derive(Clone, Debug)]
pub struct RoundOutcome {
    pub checkpoint: Checkpoint,
    pub best_val: f64,
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub steps: usize,
    pub log: TrainLog,
}

/// Predicts every sample after the evaluation-mode transform and sweeps
/// thresholds against the transformed labels.
pub fn evaluate_split(
    model: &UNet<f32>,
    samples: &[&ImageSample],
    target: Target,
    resolution: (usize, usize),
    mode: Aggregation,
) -> Result<EvalReport, TrainError> {
    let mut t = SampleTransform::new(PipelineMode::Eval, target, None, false, resolution);
    let mut inputs = Vec::with_capacity(samples.len());
    let mut labels: Vec<Mask> = Vec::with_capacity(samples.len());
    let mut unused = rand::rngs::mock::StepRng::new(0, 0);
    for s in samples {
        let n = s.normalized();
        let (image, label) = t.apply(&n, &mut unused.clone(), &mut unused)?;
        inputs.push(ImageSample { image, ..n });
        labels.push(label);
    }
    let refs: Vec<&ImageSample> = inputs.iter().collect();
    let probs = predict_planes(model, &refs)?;
    let truths: Vec<&Mask> = labels.iter().collect();
    Ok(threshold_sweep(&probs, &truths, mode)?)
}

fn batch_tensor(planes: &[Plane<f32>]) -> Tensor<f32> {
    let (h, w) = planes[0].dims();
    let mut data = Vec::with_capacity(planes.len() * h * w);
    for p in planes {
        data.extend_from_slice(p.data());
    }
    Tensor::from_vec(Shape::new(planes.len(), 1, h, w), data).expect("uniform batch")
}

/// Trains `model` in place. On success the model holds the best weights
/// seen on `val` and the same weights are returned as a checkpoint.
///
/// `tongue_model` is the frozen round-one network used by BRA; it is
/// required when `config.bra` is set.
pub fn train_round(
    model: &mut UNet<f32>,
    train: &[&ImageSample],
    val: &[&ImageSample],
    config: &TrainConfig,
    tongue_model: Option<&UNet<f32>>,
    sink: &mut dyn FnMut(&LogRecord),
) -> Result<RoundOutcome, TrainError> {
    config.validate()?;
    if config.bra && tongue_model.is_none() {
        return Err(TrainError::Config("bra needs a tongue checkpoint".into()));
    }
    if train.is_empty() || val.is_empty() {
        return Err(TrainError::Config("training and validation splits must be non-empty".into()));
    }
    let resolution = config.train_resolution.unwrap_or_else(|| train[0].dims());
    let mult = model.config().size_multiple();
    if !resolution.0.is_multiple_of(mult) || !resolution.1.is_multiple_of(mult) {
        return Err(TrainError::Config(format!("resolution {resolution:?} is not a multiple of {mult}")));
    }
    let target = config.strategy.target();
    let normalized: Vec<ImageSample> = train.iter().map(|s| s.normalized()).collect();

    let mut data_rng = stream_rng(config.seed, SeedStream::Data);
    let mut dropout_rng = stream_rng(config.seed, SeedStream::Dropout);
    let mut bra_rng = stream_rng(config.seed, SeedStream::Bra);
    let mut crop_rng = stream_rng(config.seed, SeedStream::Crop);
    let mut transform =
        SampleTransform::new(PipelineMode::Train, target, tongue_model.filter(|_| config.bra), config.roi_crop, resolution);
    let mut opt = Optimizer::new(config.optimizer, config.learning_rate);
    let decayed = model.decayed_indices();

    let mut log = TrainLog::default();
    let mut best: Option<(f64, usize, Checkpoint)> = None;
    let mut step = 0usize;
    let mut epochs_run = 0usize;
    let mut since_best = 0usize;

    'epochs: for epoch in 0..config.epochs {
        if config.max_steps == Some(0) {
            // evaluation of the starting weights only
            validate_epoch(model, val, target, resolution, config, epoch, &mut best, &mut since_best, &mut log, sink)?;
            break;
        }
        let plan = expand_epoch_plan(normalized.len(), &mut data_rng, config.expansion)?;
        for chunk in plan.chunks(config.batch_size) {
            if chunk.len() < 2 {
                continue;
            }
            let mut images = Vec::with_capacity(chunk.len());
            let mut labels = Vec::with_capacity(chunk.len());
            for &(i, aug) in chunk {
                let sample = aug.apply(&normalized[i]);
                let (img, lab) = transform.apply(&sample, &mut bra_rng, &mut crop_rng)?;
                images.push(img);
                labels.push(lab.map(f32::from));
            }
            let x_t = batch_tensor(&images);
            let y_t = batch_tensor(&labels);

            let mut g = Graph::new();
            let pv = model.bind(&mut g);
            let x = g.constant(x_t);
            let pred = model.forward(&mut g, &pv, x, true, &mut dropout_rng)?;
            let lv = total_loss(&mut g, model, &pv, pred, &y_t, config.l2_scale)?;
            let rec = StepRecord {
                step,
                total: g.value(lv.total).item() as f64,
                ce: g.value(lv.ce).item() as f64,
                l2: g.value(lv.l2).item() as f64,
            };
            if !rec.total.is_finite() {
                return Err(TrainError::Divergence { step });
            }
            let mut grads = g.backward(lv.total)?;
            let grads: Vec<Option<Vec<f32>>> = pv.iter().map(|&v| grads.take(v)).collect();
            debug_assert!(decayed.iter().all(|&i| grads[i].is_some()));
            opt.step(model.params_mut(), &grads)?;
            sink(&LogRecord::Step(rec.clone()));
            log.records.push(LogRecord::Step(rec));
            step += 1;
            if config.max_steps.is_some_and(|m| step >= m) {
                epochs_run = epoch + 1;
                validate_epoch(model, val, target, resolution, config, epoch, &mut best, &mut since_best, &mut log, sink)?;
                break 'epochs;
            }
        }
        epochs_run = epoch + 1;
        validate_epoch(model, val, target, resolution, config, epoch, &mut best, &mut since_best, &mut log, sink)?;
        if since_best >= config.early_stop_patience {
            break;
        }
    }

    let (best_val, best_epoch, checkpoint) = best.expect("at least one validation pass");
    model.load_checkpoint(&checkpoint)?;
    log.best_epoch = Some(best_epoch);
    Ok(RoundOutcome { checkpoint, best_val, best_epoch, epochs_run, steps: step, log })
}

#[allow(clippy::too_many_arguments)]
fn validate_epoch(
    model: &UNet<f32>,
    val: &[&ImageSample],
    target: Target,
    resolution: (usize, usize),
    config: &TrainConfig,
    epoch: usize,
    best: &mut Option<(f64, usize, Checkpoint)>,
    since_best: &mut usize,
    log: &mut TrainLog,
    sink: &mut dyn FnMut(&LogRecord),
) -> Result<(), TrainError> {
    let score = evaluate_split(model, val, target, resolution, config.aggregation)?.max_iou;
    let improved = best.as_ref().is_none_or(|(b, _, _)| score > *b);
    if improved {
        *best = Some((score, epoch, model.to_checkpoint()));
        *since_best = 0;
    } else {
        *since_best += 1;
    }
    let rec = EpochRecord { epoch, val_max_iou: score, best: improved };
    sink(&LogRecord::Epoch(rec.clone()));
    log.records.push(LogRecord::Epoch(rec));
    Ok(())
}
