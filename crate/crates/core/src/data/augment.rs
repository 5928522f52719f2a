//! Geometric augmentation and per-epoch expansion.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{DataError, ImageSample, Mask, Plane};

/// Bilinear sample with zero outside the frame.
fn sample_bilinear(p: &Plane<f32>, sy: f64, sx: f64) -> f32 {
    let y0 = sy.floor();
    let x0 = sx.floor();
    let fy = sy - y0;
    let fx = sx - x0;
    let (h, w) = (p.height() as isize, p.width() as isize);
    let at = |y: isize, x: isize| -> f64 {
        if y < 0 || x < 0 || y >= h || x >= w {
            0.0
        } else {
            p.get(y as usize, x as usize) as f64
        }
    };
    let (y0, x0) = (y0 as isize, x0 as isize);
    let top = (1.0 - fx) * at(y0, x0) + fx * at(y0, x0 + 1);
    let bottom = (1.0 - fx) * at(y0 + 1, x0) + fx * at(y0 + 1, x0 + 1);
    ((1.0 - fy) * top + fy * bottom) as f32
}

fn sample_nearest(p: &Mask, sy: f64, sx: f64) -> u8 {
    let y = sy.round();
    let x = sx.round();
    if y < 0.0 || x < 0.0 || y >= p.height() as f64 || x >= p.width() as f64 {
        0
    } else {
        p.get(y as usize, x as usize)
    }
}

/// Rotates about the image center by `degrees` (counter-clockwise on
/// screen). Image values are interpolated bilinearly, labels by nearest
/// neighbour; pixels mapped from outside the frame become 0.
pub fn rotate(sample: &ImageSample, degrees: f64) -> ImageSample {
    let (h, w) = sample.dims();
    let (sin, cos) = degrees.to_radians().sin_cos();
    let cy = (h as f64 - 1.0) / 2.0;
    let cx = (w as f64 - 1.0) / 2.0;
    let mut image = Plane::filled(h, w, 0.0f32);
    let mut tongue = Plane::filled(h, w, 0u8);
    let mut vein = Plane::filled(h, w, 0u8);
    for y in 0..h {
        for x in 0..w {
            // inverse map: destination -> source
            let dy = y as f64 - cy;
            let dx = x as f64 - cx;
            let sx = cos * dx - sin * dy + cx;
            let sy = sin * dx + cos * dy + cy;
            image.set(y, x, sample_bilinear(&sample.image, sy, sx));
            tongue.set(y, x, sample_nearest(&sample.tongue, sy, sx));
            vein.set(y, x, sample_nearest(&sample.vein, sy, sx));
        }
    }
    ImageSample { id: sample.id.clone(), image, tongue, vein }
}

fn mirror<T: Copy>(p: &Plane<T>) -> Plane<T> {
    let mut out = p.clone();
    for row in out.data_mut().chunks_exact_mut(p.width()) {
        row.reverse();
    }
    out
}

pub fn hflip(sample: &ImageSample) -> ImageSample {
    ImageSample {
        id: sample.id.clone(),
        image: mirror(&sample.image),
        tongue: mirror(&sample.tongue),
        vein: mirror(&sample.vein),
    }
}

/// The deterministic variants emitted for each training image.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Augmentation {
    Original,
    Rotate10,
    Rotate20,
    Rotate30,
    HorizontalFlip,
}

impl Augmentation {
    pub const VARIANTS: [Augmentation; 4] =
        [Augmentation::Rotate10, Augmentation::Rotate20, Augmentation::Rotate30, Augmentation::HorizontalFlip];

    pub fn apply(self, s: &ImageSample) -> ImageSample {
        match self {
            Augmentation::Original => s.clone(),
            Augmentation::Rotate10 => rotate(s, 10.0),
            Augmentation::Rotate20 => rotate(s, 20.0),
            Augmentation::Rotate30 => rotate(s, 30.0),
            Augmentation::HorizontalFlip => hflip(s),
        }
    }
}

/// How many variants each image contributes per epoch.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExpansionMode {
    /// Original plus all four variants (5x).
    #[default]
    Full,
    /// Original plus the variant selected by shuffled position mod 4 (2x).
    Cycle,
}

/// Shuffles the samples (Fisher-Yates) and emits each with its
/// augmentations, in order.
pub fn expand_epoch<R: Rng + ?Sized>(
    samples: &[ImageSample],
    rng: &mut R,
    mode: ExpansionMode,
) -> Result<Vec<ImageSample>, DataError> {
    Ok(expand_epoch_plan(samples.len(), rng, mode)?.into_iter().map(|(i, a)| a.apply(&samples[i])).collect())
}

/// The `(sample index, augmentation)` order [`expand_epoch`] would emit.
pub fn expand_epoch_plan<R: Rng + ?Sized>(
    count: usize,
    rng: &mut R,
    mode: ExpansionMode,
) -> Result<Vec<(usize, Augmentation)>, DataError> {
    if count == 0 {
        return Err(DataError::Empty);
    }
    let mut order: Vec<usize> = (0..count).collect();
    order.shuffle(rng);
    let mut plan = Vec::with_capacity(count * 5);
    for (pos, i) in order.into_iter().enumerate() {
        plan.push((i, Augmentation::Original));
        match mode {
            ExpansionMode::Full => plan.extend(Augmentation::VARIANTS.iter().map(|&a| (i, a))),
            ExpansionMode::Cycle => plan.push((i, Augmentation::VARIANTS[pos % 4])),
        }
    }
    Ok(plan)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn disc(n: usize, r: f64) -> ImageSample {
        let c = (n as f64 - 1.0) / 2.0;
        let mut m = Plane::filled(n, n, 0u8);
        let mut img = Plane::filled(n, n, 0.0f32);
        for y in 0..n {
            for x in 0..n {
                let d = ((y as f64 - c).powi(2) + (x as f64 - c).powi(2)).sqrt();
                if d <= r {
                    m.set(y, x, 1);
                }
                img.set(y, x, (y * n + x) as f32 * 0.1 - 3.0);
            }
        }
        ImageSample::new("d", img, m.clone(), m).unwrap()
    }

    fn asym(n: usize) -> ImageSample {
        let img = Plane::from_vec(n, n, (0..n * n).map(|i| (i as f32 * 0.7).sin()).collect()).unwrap();
        let m = Plane::from_vec(n, n, (0..n * n).map(|i| (i % 3 == 0) as u8).collect()).unwrap();
        ImageSample::new("a", img, m.clone(), m).unwrap()
    }

    #[test]
    fn hflip_is_an_involution() {
        let s = asym(7);
        assert_ne!(hflip(&s), s);
        assert_eq!(hflip(&hflip(&s)), s);
    }

    #[test]
    fn zero_rotation_is_identity() {
        let s = asym(8);
        assert_eq!(rotate(&s, 0.0), s);
    }

    #[test]
    fn rotated_disc_keeps_its_area() {
        let s = disc(64, 20.0);
        let before = s.tongue.count_positive() as f64;
        for deg in [10.0, 20.0, 30.0] {
            let r = rotate(&s, deg);
            let after = r.tongue.count_positive() as f64;
            assert!((after - before).abs() / before < 0.05, "{deg}: {before} -> {after}");
            assert!(r.tongue.is_binary() && r.vein.is_binary());
            assert_eq!(r.dims(), s.dims());
        }
    }

    #[test]
    fn expansion_is_five_fold_and_deterministic() {
        let samples: Vec<_> = (0..16).map(|i| ImageSample { id: format!("s{i}"), ..asym(8) }).collect();
        let a = expand_epoch(&samples, &mut ChaCha8Rng::seed_from_u64(3), ExpansionMode::Full).unwrap();
        let b = expand_epoch(&samples, &mut ChaCha8Rng::seed_from_u64(3), ExpansionMode::Full).unwrap();
        assert_eq!(a.len(), 80);
        assert_eq!(a, b);
        // closure: every output is one of the five variants of its source
        for out in &a {
            let src = samples.iter().find(|s| s.id == out.id).unwrap();
            let variants: Vec<_> =
                std::iter::once(Augmentation::Original).chain(Augmentation::VARIANTS).map(|v| v.apply(src)).collect();
            assert!(variants.contains(out));
        }
        let c = expand_epoch(&samples, &mut ChaCha8Rng::seed_from_u64(3), ExpansionMode::Cycle).unwrap();
        assert_eq!(c.len(), 32);
    }

    #[test]
    fn empty_dataset_is_an_error() {
        assert!(matches!(
            expand_epoch(&[], &mut ChaCha8Rng::seed_from_u64(0), ExpansionMode::Full),
            Err(DataError::Empty)
        ));
    }
}
