//! Binarization, IoU and the threshold sweep.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{ImageSample, Mask, Plane, Target};
use crate::nn::{Shape, Tensor};
use crate::unet::{ModelError, UNet};

pub const THRESHOLD_COUNT: usize = 19;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("shape mismatch: {a:?} vs {b:?}")]
    ShapeMismatch { a: (usize, usize), b: (usize, usize) },
    #[error("nothing to evaluate")]
    Empty,
    #[error("threshold {0} outside (0, 1)")]
    Threshold(f64),
    #[error("{0} probability maps for {1} labels")]
    Count(usize, usize),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// `0.05, 0.10, ..., 0.95`.
pub fn thresholds() -> [f64; THRESHOLD_COUNT] {
    std::array::from_fn(|k| (k + 1) as f64 / 20.0)
}

pub fn binarize(prob: &Plane<f32>, threshold: f64) -> Mask {
    prob.map(|p| (p as f64 >= threshold) as u8)
}

/// `tp / (tp + fp + fn)`; two empty masks agree perfectly.
pub fn iou(pred: &Mask, truth: &Mask) -> Result<f64, EvalError> {
    let (tp, union) = confusion(pred, truth)?;
    Ok(if union == 0 { 1.0 } else { tp as f64 / union as f64 })
}

/// `(tp, tp + fp + fn)`.
fn confusion(pred: &Mask, truth: &Mask) -> Result<(u64, u64), EvalError> {
    if pred.dims() != truth.dims() {
        return Err(EvalError::ShapeMismatch { a: pred.dims(), b: truth.dims() });
    }
    let (mut tp, mut union) = (0u64, 0u64);
    for (&p, &t) in pred.data().iter().zip(truth.data()) {
        let (p, t) = (p != 0, t != 0);
        tp += (p && t) as u64;
        union += (p || t) as u64;
    }
    Ok((tp, union))
}

/// How per-image overlaps are combined.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    /// Mean of per-image IoU.
    #[default]
    PerImage,
    /// One confusion count over all pixels of all images.
    Pooled,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub thresholds: Vec<f64>,
    pub iou: Vec<f64>,
    pub max_iou: f64,
    pub opt_threshold: f64,
    pub aiou: f64,
    pub abs_error: f64,
}

impl EvalReport {
    /// Summarizes an IoU curve over [`thresholds`]. Ties resolve to the
    /// lowest threshold.
    pub fn from_curve(iou: Vec<f64>) -> Result<Self, EvalError> {
        if iou.len() != THRESHOLD_COUNT {
            return Err(EvalError::Count(iou.len(), THRESHOLD_COUNT));
        }
        let ts = thresholds();
        let mut best = 0;
        for (k, &v) in iou.iter().enumerate() {
            if v > iou[best] {
                best = k;
            }
        }
        let max_iou = iou[best];
        let aiou = iou.iter().sum::<f64>() / THRESHOLD_COUNT as f64;
        Ok(EvalReport { thresholds: ts.to_vec(), max_iou, opt_threshold: ts[best], aiou, abs_error: (max_iou - aiou).abs(), iou })
    }

    pub const CSV_HEADER: &'static str = "max_iou,opt_threshold,aiou,abs_error";

    pub fn csv_row(&self) -> String {
        format!("{:.6},{:.2},{:.6},{:.6}", self.max_iou, self.opt_threshold, self.aiou, self.abs_error)
    }

    /// Element-wise mean of several reports' curves, re-summarized.
    pub fn average(reports: &[EvalReport]) -> Result<Self, EvalError> {
        if reports.is_empty() {
            return Err(EvalError::Empty);
        }
        let curve = (0..THRESHOLD_COUNT)
            .map(|k| reports.iter().map(|r| r.iou[k]).sum::<f64>() / reports.len() as f64)
            .collect();
        Self::from_curve(curve)
    }
}

pub fn threshold_sweep(probs: &[Plane<f32>], truths: &[&Mask], mode: Aggregation) -> Result<EvalReport, EvalError> {
    if probs.is_empty() {
        return Err(EvalError::Empty);
    }
    if probs.len() != truths.len() {
        return Err(EvalError::Count(probs.len(), truths.len()));
    }
    let mut curve = Vec::with_capacity(THRESHOLD_COUNT);
    for t in thresholds() {
        let value = match mode {
            Aggregation::PerImage => {
                let mut sum = 0.0;
                for (p, truth) in probs.iter().zip(truths) {
                    sum += iou(&binarize(p, t), truth)?;
                }
                sum / probs.len() as f64
            }
            Aggregation::Pooled => {
                let (mut tp, mut union) = (0, 0);
                for (p, truth) in probs.iter().zip(truths) {
                    let (a, b) = confusion(&binarize(p, t), truth)?;
                    tp += a;
                    union += b;
                }
                if union == 0 { 1.0 } else { tp as f64 / union as f64 }
            }
        };
        curve.push(value);
    }
    EvalReport::from_curve(curve)
}

/// Runs `model` on each (already normalized) sample, one image at a time.
pub fn predict_planes(model: &UNet<f32>, samples: &[&ImageSample]) -> Result<Vec<Plane<f32>>, EvalError> {
    samples
        .iter()
        .map(|s| {
            let (h, w) = s.dims();
            let x = Tensor::from_vec(Shape::new(1, 1, h, w), s.image.data().to_vec()).map_err(ModelError::from)?;
            let y = model.predict(&x)?;
            Ok(Plane::from_vec(h, w, y.into_data()).expect("output matches input size"))
        })
        .collect()
}

/// Normalizes, predicts and sweeps against the `target` labels.
pub fn evaluate_model(
    model: &UNet<f32>,
    samples: &[&ImageSample],
    target: Target,
    mode: Aggregation,
) -> Result<EvalReport, EvalError> {
    let normalized: Vec<ImageSample> = samples.iter().map(|s| s.normalized()).collect();
    let refs: Vec<&ImageSample> = normalized.iter().collect();
    let probs = predict_planes(model, &refs)?;
    let truths: Vec<&Mask> = samples.iter().map(|s| s.label(target)).collect();
    threshold_sweep(&probs, &truths, mode)
}

/// Probability map as gray levels `round(255 p)`.
pub fn prob_to_gray(prob: &Plane<f32>) -> Plane<u8> {
    prob.map(|p| (p.clamp(0.0, 1.0) * 255.0).round() as u8)
}

const SEPARATOR: u8 = 128;

/// Three panels side by side, one separator column between each: the
/// image, the binarized mask (0/255), and the image with mask pixels set
/// to 255.
pub fn render_overlay(image: &Plane<u8>, prob: &Plane<f32>, threshold: f64) -> Result<Plane<u8>, EvalError> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(EvalError::Threshold(threshold));
    }
    if image.dims() != prob.dims() {
        return Err(EvalError::ShapeMismatch { a: image.dims(), b: prob.dims() });
    }
    let (h, w) = image.dims();
    let mask = binarize(prob, threshold);
    let out_w = 3 * w + 2;
    let mut out = Plane::filled(h, out_w, SEPARATOR);
    for y in 0..h {
        for x in 0..w {
            let raw = image.get(y, x);
            let m = mask.get(y, x) == 1;
            out.set(y, x, raw);
            out.set(y, w + 1 + x, if m { 255 } else { 0 });
            out.set(y, 2 * w + 2 + x, if m { 255 } else { raw });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn mask(h: usize, w: usize, v: &[u8]) -> Mask {
        Plane::from_vec(h, w, v.to_vec()).unwrap()
    }

    #[test]
    fn threshold_grid() {
        let t = thresholds();
        assert_eq!(t.len(), 19);
        assert_eq!(t[0], 0.05);
        assert_eq!(t[10], 0.55);
        assert_eq!(t[18], 0.95);
    }

    #[test]
    fn binarize_uses_greater_or_equal() {
        let p = Plane::from_vec(1, 3, vec![0.49, 0.51, 0.5]).unwrap();
        assert_eq!(binarize(&p, 0.5).data(), &[0, 1, 1]);
        assert_eq!(binarize(&p, 0.6).count_positive(), 0);
    }

    #[test]
    fn iou_cases() {
        let a = mask(2, 2, &[1, 1, 0, 0]);
        assert_eq!(iou(&a, &a).unwrap(), 1.0);
        assert_eq!(iou(&a, &mask(2, 2, &[0, 0, 1, 1])).unwrap(), 0.0);
        let truth = mask(2, 4, &[1, 1, 1, 1, 0, 0, 0, 0]);
        let half = mask(2, 4, &[1, 1, 0, 0, 0, 0, 0, 0]);
        assert_eq!(iou(&half, &truth).unwrap(), 0.5);
        let empty = mask(2, 2, &[0; 4]);
        assert_eq!(iou(&empty, &empty).unwrap(), 1.0);
        assert!(iou(&a, &mask(1, 4, &[0; 4])).is_err());
    }

    #[test]
    fn table_row_arithmetic() {
        // 18 values averaging with the peak to 0.859
        let mut curve = vec![0.0; 19];
        curve[10] = 0.864;
        let rest = (0.859 * 19.0 - 0.864) / 18.0;
        for (k, v) in curve.iter_mut().enumerate() {
            if k != 10 {
                *v = rest;
            }
        }
        let r = EvalReport::from_curve(curve).unwrap();
        assert_eq!(r.max_iou, 0.864);
        assert_eq!(r.opt_threshold, 0.55);
        assert!((r.aiou - 0.859).abs() < 1e-12);
        assert_eq!(r.abs_error, (r.max_iou - r.aiou).abs());
        assert_eq!(format!("{:.3}", r.abs_error), "0.005");
    }

    #[test]
    fn indicator_map_is_perfect_below_one() {
        let truth = mask(4, 4, &[1, 0, 1, 0, 0, 0, 1, 1, 1, 1, 0, 0, 0, 1, 0, 1]);
        let prob = truth.map(|v| v as f32 * 0.96);
        let r = threshold_sweep(&[prob], &[&truth], Aggregation::PerImage).unwrap();
        assert!(r.iou.iter().all(|&v| v == 1.0));
        assert_eq!(r.max_iou, 1.0);
        assert_eq!(r.opt_threshold, 0.05);
        assert_eq!(r.abs_error, 0.0);
    }

    #[test]
    fn pooled_and_per_image_differ() {
        let t1 = mask(1, 4, &[1, 0, 0, 0]);
        let t2 = mask(1, 4, &[1, 1, 1, 1]);
        let p1 = Plane::from_vec(1, 4, vec![0.0; 4]).unwrap();
        let p2 = Plane::from_vec(1, 4, vec![1.0; 4]).unwrap();
        let per = threshold_sweep(&[p1.clone(), p2.clone()], &[&t1, &t2], Aggregation::PerImage).unwrap();
        let pooled = threshold_sweep(&[p1, p2], &[&t1, &t2], Aggregation::Pooled).unwrap();
        assert_eq!(per.max_iou, 0.5);
        assert_eq!(pooled.max_iou, 0.8);
    }

    #[test]
    fn empty_sweep_rejected() {
        assert!(matches!(threshold_sweep(&[], &[], Aggregation::PerImage), Err(EvalError::Empty)));
    }

    #[test]
    fn overlay_layout() {
        let img = Plane::from_vec(2, 3, vec![10, 20, 30, 40, 50, 60]).unwrap();
        let zero = Plane::filled(2, 3, 0.1f32);
        let out = render_overlay(&img, &zero, 0.5).unwrap();
        assert_eq!(out.dims(), (2, 11));
        for y in 0..2 {
            for x in 0..3 {
                assert_eq!(out.get(y, 8 + x), img.get(y, x));
            }
        }
        assert!(render_overlay(&img, &zero, 1.0).is_err());
    }

    #[test]
    fn report_json_keys() {
        let r = EvalReport::from_curve(vec![0.5; 19]).unwrap();
        let v = serde_json::to_value(&r).unwrap();
        for k in ["thresholds", "iou", "max_iou", "opt_threshold", "aiou", "abs_error"] {
            assert!(v.get(k).is_some(), "{k}");
        }
        assert_eq!(r.csv_row().split(',').count(), EvalReport::CSV_HEADER.split(',').count());
    }

    fn maps() -> impl Strategy<Value = (Vec<f32>, Vec<u8>)> {
        (prop::collection::vec(0.0f32..1.0, 64), prop::collection::vec(0u8..2, 64))
    }

    proptest! {
        #[test]
        fn raising_threshold_never_adds_positives((p, _) in maps()) {
            let prob = Plane::from_vec(8, 8, p).unwrap();
            let ts = thresholds();
            for pair in ts.windows(2) {
                let lo = binarize(&prob, pair[0]);
                let hi = binarize(&prob, pair[1]);
                for (a, b) in lo.data().iter().zip(hi.data()) {
                    prop_assert!(b <= a);
                }
            }
        }

        #[test]
        fn overlay_marks_exactly_the_mask((p, g) in maps(), k in 0usize..19) {
            let prob = Plane::from_vec(8, 8, p).unwrap();
            let img = Plane::from_vec(8, 8, g.iter().map(|v| v * 100).collect()).unwrap();
            let t = thresholds()[k];
            let out = render_overlay(&img, &prob, t).unwrap();
            let m = binarize(&prob, t);
            for y in 0..8 {
                for x in 0..8 {
                    prop_assert_eq!(out.get(y, 9 + x), m.get(y, x) * 255);
                    let ov = out.get(y, 18 + x);
                    prop_assert_eq!(ov, if m.get(y, x) == 1 { 255 } else { img.get(y, x) });
                }
            }
        }

        #[test]
        fn report_invariants(curve in prop::collection::vec(0.0f64..=1.0, 19)) {
            let r = EvalReport::from_curve(curve.clone()).unwrap();
            prop_assert!(r.aiou <= r.max_iou);
            prop_assert_eq!(r.abs_error, r.max_iou - r.aiou);
            prop_assert!(thresholds().contains(&r.opt_threshold));
            let max = curve.iter().cloned().fold(f64::MIN, f64::max);
            prop_assert_eq!(r.max_iou, max);
        }

        #[test]
        fn iou_is_symmetric((_, a) in maps(), (_, b) in maps()) {
            let a = mask(8, 8, &a);
            let b = mask(8, 8, &b);
            prop_assert_eq!(iou(&a, &b).unwrap(), iou(&b, &a).unwrap());
        }
    }
}
