//! Per-sample input preparation for training and evaluation.

use rand::Rng;

use super::TrainError;
use crate::data::crop::{crop, resize_bilinear, resize_nearest};
use crate::data::{bra_combine, roi_crop_box, BraSwitch, CropDraws, ImageSample, Mask, Plane, Target};
use crate::eval::predict_planes;
use crate::unet::UNet;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PipelineMode {
    /// Augmented training inputs; BRA and crop run when enabled.
    Train,
    /// Validation and test inputs; BRA and crop never run.
    Eval,
}

/// Turns a normalized sample into an `(input, label)` pair at the training
/// resolution. Counts how often each optional stage ran.
pub struct SampleTransform<'a> {
    mode: PipelineMode,
    target: Target,
    bra: Option<&'a UNet<f32>>,
    roi_crop: bool,
    resolution: (usize, usize),
    bra_calls: usize,
    crop_calls: usize,
}

impl<'a> SampleTransform<'a> {
    pub fn new(
        mode: PipelineMode,
        target: Target,
        bra: Option<&'a UNet<f32>>,
        roi_crop: bool,
        resolution: (usize, usize),
    ) -> Self {
        SampleTransform { mode, target, bra, roi_crop, resolution, bra_calls: 0, crop_calls: 0 }
    }

    pub fn mode(&self) -> PipelineMode {
        self.mode
    }

    pub fn bra_calls(&self) -> usize {
        self.bra_calls
    }

    pub fn crop_calls(&self) -> usize {
        self.crop_calls
    }

    /// `bra_rng` and `crop_rng` are only drawn from by their own stage.
    pub fn apply<R1: Rng + ?Sized, R2: Rng + ?Sized>(
        &mut self,
        sample: &ImageSample,
        bra_rng: &mut R1,
        crop_rng: &mut R2,
    ) -> Result<(Plane<f32>, Mask), TrainError> {
        let mut image = sample.image.clone();
        let mut label = sample.label(self.target).clone();
        if self.mode == PipelineMode::Train {
            if let Some(tongue_model) = self.bra {
                let prediction = predict_planes(tongue_model, &[sample])?.pop().expect("one prediction");
                image = bra_combine(&image, &prediction, BraSwitch::draw(bra_rng))?;
                self.bra_calls += 1;
            }
            if self.roi_crop {
                // the region of interest is the tongue, whatever the target
                if let Ok(b) = roi_crop_box(&sample.tongue, CropDraws::sample(crop_rng)) {
                    image = crop(&image, b);
                    label = crop(&label, b);
                    self.crop_calls += 1;
                }
            }
        }
        let (h, w) = self.resolution;
        if image.dims() != (h, w) {
            image = resize_bilinear(&image, h, w);
            label = resize_nearest(&label, h, w);
        }
        Ok((image, label))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synth_generate;
    use crate::unet::UNetConfig;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tongue_model() -> UNet<f32> {
        UNet::build_seeded(UNetConfig { base_filters: 2, depth: 2, ..UNetConfig::default() }, 0).unwrap()
    }

    #[test]
    fn train_mode_runs_both_stages() {
        let m = tongue_model();
        let s = synth_generate(1, 32, 32, 1).unwrap().remove(0).normalized();
        let mut t = SampleTransform::new(PipelineMode::Train, Target::Vein, Some(&m), true, (32, 32));
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (img, lab) = t.apply(&s, &mut rng.clone(), &mut rng).unwrap();
        assert_eq!((t.bra_calls(), t.crop_calls()), (1, 1));
        assert_eq!(img.dims(), (32, 32));
        assert!(lab.count_positive() > 0 && lab.is_binary());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn eval_mode_never_augments(seed in 0u64..1000, bra in any::<bool>(), roi in any::<bool>(), vein in any::<bool>()) {
            let m = tongue_model();
            let s = synth_generate(1, 32, 32, seed).unwrap().remove(0).normalized();
            let target = if vein { Target::Vein } else { Target::Tongue };
            let mut t = SampleTransform::new(PipelineMode::Eval, target, bra.then_some(&m), roi, (32, 32));
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (img, lab) = t.apply(&s, &mut rng.clone(), &mut rng).unwrap();
            prop_assert_eq!(t.bra_calls() + t.crop_calls(), 0);
            prop_assert_eq!(&img, &s.image);
            prop_assert_eq!(&lab, s.label(target));
        }
    }
}
