//! The six-row strategy comparison over cross-validation folds.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::round::{evaluate_split, train_round, RoundOutcome};
use super::{stream_rng, SeedStream, Strategy, TrainConfig, TrainError};
use crate::data::store::select;
use crate::data::{FoldSplit, ImageSample};
use crate::eval::EvalReport;
use crate::unet::{Checkpoint, UNet};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct StrategyRow {
    pub name: &'static str,
    pub strategy: Strategy,
    pub bra: bool,
    pub roi_crop: bool,
}

pub const TABLE_ROWS: [StrategyRow; 6] = [
    StrategyRow { name: "direct_tongue", strategy: Strategy::DirectTongue, bra: false, roi_crop: false },
    StrategyRow { name: "direct_vein", strategy: Strategy::DirectVein, bra: false, roi_crop: false },
    StrategyRow { name: "retrain_vein", strategy: Strategy::RetrainVein, bra: false, roi_crop: false },
    StrategyRow { name: "retrain_vein+bra", strategy: Strategy::RetrainVein, bra: true, roi_crop: false },
    StrategyRow { name: "retrain_vein+crop", strategy: Strategy::RetrainVein, bra: false, roi_crop: true },
    StrategyRow { name: "retrain_vein+bra+crop", strategy: Strategy::RetrainVein, bra: true, roi_crop: true },
];

impl StrategyRow {
    pub fn config(&self, base: &TrainConfig) -> TrainConfig {
        TrainConfig { strategy: self.strategy, bra: self.bra, roi_crop: self.roi_crop, ..base.clone() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub row: usize,
    pub strategy: String,
    pub fold: usize,
    pub best_val_max_iou: f64,
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub seconds: f64,
    pub test: EvalReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatrixReport {
    pub cells: Vec<CellResult>,
    /// One fold-averaged report per row, in table order.
    pub rows: Vec<(String, EvalReport)>,
}

impl MatrixReport {
    fn assemble(mut cells: Vec<CellResult>) -> Result<Self, TrainError> {
        cells.sort_by_key(|c| (c.row, c.fold));
        let mut rows = Vec::new();
        for (r, row) in TABLE_ROWS.iter().enumerate() {
            let reports: Vec<EvalReport> = cells.iter().filter(|c| c.row == r).map(|c| c.test.clone()).collect();
            if !reports.is_empty() {
                rows.push((row.name.to_string(), EvalReport::average(&reports)?));
            }
        }
        Ok(MatrixReport { cells, rows })
    }

    pub fn row(&self, name: &str) -> Option<&EvalReport> {
        self.rows.iter().find(|(n, _)| n == name).map(|(_, r)| r)
    }

    /// Table layout: strategy, Max IoU, optimal threshold, AIoU, Abs Error.
    pub fn to_csv(&self) -> String {
        let mut out = format!("strategy,{}\n", EvalReport::CSV_HEADER);
        for (name, r) in &self.rows {
            out.push_str(&format!("{name},{}\n", r.csv_row()));
        }
        out
    }

    /// Every strategy x fold cell.
    pub fn cells_csv(&self) -> String {
        let mut out = format!("strategy,fold,best_epoch,epochs_run,best_val_max_iou,{}\n", EvalReport::CSV_HEADER);
        for c in &self.cells {
            out.push_str(&format!(
                "{},{},{},{},{:.6},{}\n",
                c.strategy,
                c.fold,
                c.best_epoch,
                c.epochs_run,
                c.best_val_max_iou,
                c.test.csv_row()
            ));
        }
        out
    }
}

/// Called once per finished cell.
pub type Progress<'a> = &'a (dyn Fn(&CellResult) + Sync);

fn run_cell(
    row: usize,
    fold: &FoldSplit,
    samples: &[ImageSample],
    base: &TrainConfig,
    tongue: Option<&Checkpoint>,
) -> Result<(CellResult, RoundOutcome), TrainError> {
    let start = Instant::now();
    let spec = &TABLE_ROWS[row];
    let config = spec.config(base);
    let train = select(samples, &fold.train)?;
    let val = select(samples, &fold.val)?;
    let test = select(samples, &fold.test)?;
    let mut model = UNet::build(config.model.clone(), &mut stream_rng(config.seed, SeedStream::Init))?;
    let frozen = match (spec.strategy, tongue) {
        (Strategy::RetrainVein, Some(ck)) => {
            model.load_checkpoint(ck)?;
            Some(model.clone())
        }
        (Strategy::RetrainVein, None) => return Err(TrainError::Config("retraining needs the tongue checkpoint".into())),
        _ => None,
    };
    let outcome = train_round(&mut model, &train, &val, &config, frozen.as_ref(), &mut |_| {})?;
    let resolution = config.train_resolution.unwrap_or_else(|| train[0].dims());
    let report = evaluate_split(&model, &test, config.strategy.target(), resolution, config.aggregation)?;
    let cell = CellResult {
        row,
        strategy: spec.name.to_string(),
        fold: fold.fold_index,
        best_val_max_iou: outcome.best_val,
        best_epoch: outcome.best_epoch,
        epochs_run: outcome.epochs_run,
        seconds: start.elapsed().as_secs_f64(),
        test: report,
    };
    Ok((cell, outcome))
}

/// Runs every table row on each listed fold and evaluates the kept
/// checkpoint on that fold's test ids. Retraining rows start from the
/// fold's tongue checkpoint; BRA uses a frozen copy of it. With `jobs > 1`
/// the vein cells of a fold run on that many threads.
pub fn run_strategy_matrix(
    samples: &[ImageSample],
    folds: &[FoldSplit],
    base: &TrainConfig,
    jobs: usize,
    progress: Progress<'_>,
) -> Result<MatrixReport, TrainError> {
    if folds.is_empty() {
        return Err(TrainError::Config("no folds selected".into()));
    }
    let mut cells = Vec::new();
    for fold in folds {
        let (tongue_cell, tongue) = run_cell(0, fold, samples, base, None)?;
        progress(&tongue_cell);
        cells.push(tongue_cell);
        let next = AtomicUsize::new(1);
        let results: Mutex<Vec<Result<CellResult, TrainError>>> = Mutex::new(Vec::new());
        std::thread::scope(|s| {
            for _ in 0..jobs.clamp(1, TABLE_ROWS.len() - 1) {
                s.spawn(|| loop {
                    let row = next.fetch_add(1, Ordering::SeqCst);
                    if row >= TABLE_ROWS.len() {
                        break;
                    }
                    let r = run_cell(row, fold, samples, base, Some(&tongue.checkpoint)).map(|(c, _)| c);
                    if let Ok(c) = &r {
                        progress(c);
                    }
                    results.lock().expect("no panics while holding the lock").push(r);
                });
            }
        });
        for r in results.into_inner().expect("threads joined") {
            cells.push(r?);
        }
    }
    MatrixReport::assemble(cells)
}
