//! Synthetic near-infrared sublingual images.
//!
//! Each frame is a dark background with a bright elliptical tongue region
//! and two darker curved vein strokes in the lower half of the ellipse,
//! followed by a mild vignette and Gaussian noise. Sample `i` is drawn from
//! its own RNG seeded with `seed + i`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{DataError, ImageSample, Plane};

pub const NOISE_SIGMA: f64 = 5.0;
/// Minimum vein darkening relative to the surrounding tongue, before the
/// vignette and noise.
pub const MIN_VEIN_CONTRAST: f64 = 56.0;

struct Ellipse {
    cy: f64,
    cx: f64,
    ay: f64,
    ax: f64,
    sin: f64,
    cos: f64,
}

impl Ellipse {
    /// Pixel to local coordinates in units of the semi-axes; `v` grows
    /// towards the bottom of the frame.
    fn local(&self, y: f64, x: f64) -> (f64, f64) {
        let dy = y - self.cy;
        let dx = x - self.cx;
        let u = (self.cos * dx + self.sin * dy) / self.ax;
        let v = (-self.sin * dx + self.cos * dy) / self.ay;
        (u, v)
    }

    fn to_pixel(&self, u: f64, v: f64) -> (f64, f64) {
        let lx = u * self.ax;
        let ly = v * self.ay;
        (self.cy + self.sin * lx + self.cos * ly, self.cx + self.cos * lx - self.sin * ly)
    }

    fn inside(&self, y: f64, x: f64) -> bool {
        let (u, v) = self.local(y, x);
        u * u + v * v <= 1.0
    }
}

fn bezier(p0: (f64, f64), p1: (f64, f64), p2: (f64, f64), t: f64) -> (f64, f64) {
    let a = (1.0 - t) * (1.0 - t);
    let b = 2.0 * (1.0 - t) * t;
    let c = t * t;
    (a * p0.0 + b * p1.0 + c * p2.0, a * p0.1 + b * p1.1 + c * p2.1)
}

fn generate_one(id: String, h: usize, w: usize, rng: &mut ChaCha8Rng) -> ImageSample {
    let (hf, wf) = (h as f64, w as f64);
    let scale = hf.min(wf) / 64.0;
    let e = {
        let theta = rng.gen_range(-15.0f64..15.0).to_radians();
        Ellipse {
            cy: hf * rng.gen_range(0.45..0.55),
            cx: wf * rng.gen_range(0.45..0.55),
            ay: hf * rng.gen_range(0.30..0.38),
            ax: wf * rng.gen_range(0.26..0.34),
            sin: theta.sin(),
            cos: theta.cos(),
        }
    };
    let background = rng.gen_range(25.0..45.0);
    let tongue_level = rng.gen_range(150.0..185.0);
    let darkening = rng.gen_range(MIN_VEIN_CONTRAST..80.0);
    let radius = rng.gen_range(1.1..1.7) * scale;

    // two roughly vertical strokes, mirrored about the ellipse axis
    let mut strokes = Vec::new();
    for side in [-1.0f64, 1.0] {
        let u0 = side * rng.gen_range(0.10..0.22);
        let u2 = side * rng.gen_range(0.18..0.34);
        let u1 = side * rng.gen_range(0.25..0.45);
        let v0 = rng.gen_range(0.02..0.15);
        let v2 = rng.gen_range(0.65..0.82);
        let v1 = (v0 + v2) / 2.0 + rng.gen_range(-0.1..0.1);
        let pts: Vec<(f64, f64)> = (0..=48)
            .map(|i| {
                let (u, v) = bezier((u0, v0), (u1, v1), (u2, v2), i as f64 / 48.0);
                e.to_pixel(u, v)
            })
            .collect();
        strokes.push(pts);
    }

    let near_stroke = |y: f64, x: f64| {
        strokes.iter().flatten().any(|&(py, px)| (py - y).powi(2) + (px - x).powi(2) <= radius * radius)
    };

    let noise = Normal::new(0.0, NOISE_SIGMA).expect("finite sigma");
    let mut image = Plane::filled(h, w, 0.0f32);
    let mut tongue = Plane::filled(h, w, 0u8);
    let mut vein = Plane::filled(h, w, 0u8);
    let rmax2 = (hf / 2.0).powi(2) + (wf / 2.0).powi(2);
    for y in 0..h {
        for x in 0..w {
            let (yc, xc) = (y as f64 + 0.5, x as f64 + 0.5);
            let mut level = background;
            if e.inside(yc, xc) {
                tongue.set(y, x, 1);
                let (u, v) = e.local(yc, xc);
                level = tongue_level + 15.0 * (1.0 - (u * u + v * v));
                if near_stroke(yc, xc) {
                    vein.set(y, x, 1);
                    level -= darkening;
                }
            }
            let r2 = (yc - hf / 2.0).powi(2) + (xc - wf / 2.0).powi(2);
            let vignette = 1.0 - 0.2 * r2 / rmax2;
            let v = level * vignette + noise.sample(rng);
            image.set(y, x, v.round().clamp(0.0, 255.0) as f32);
        }
    }
    ImageSample { id, image, tongue, vein }
}

/// Generates `count` samples of `height x width`.
pub fn synth_generate(count: usize, height: usize, width: usize, seed: u64) -> Result<Vec<ImageSample>, DataError> {
    if height == 0 || width == 0 || !height.is_multiple_of(16) || !width.is_multiple_of(16) {
        return Err(DataError::BadSize { height, width });
    }
    Ok((0..count)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(i as u64));
            generate_one(format!("s{i:03}"), height, width, &mut rng)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn masks_nest_and_veins_are_thin() {
        let samples = synth_generate(26, 64, 64, 7).unwrap();
        assert_eq!(samples.len(), 26);
        for s in &samples {
            s.validate().unwrap();
            for (t, v) in s.tongue.data().iter().zip(s.vein.data()) {
                assert!(*v <= *t, "vein outside tongue in {}", s.id);
            }
            assert!(s.vein.count_positive() > 0);
            assert!(s.vein.count_positive() < s.tongue.count_positive());
            assert!(s.image.data().iter().all(|&p| p == p.round() && (0.0..=255.0).contains(&p)));
        }
    }

    #[test]
    fn veins_are_darker_than_tongue() {
        let samples = synth_generate(100, 64, 64, 11).unwrap();
        for s in &samples {
            let (mut vs, mut vn, mut ts, mut tn) = (0.0, 0, 0.0, 0);
            for i in 0..s.image.data().len() {
                let p = s.image.data()[i] as f64;
                if s.vein.data()[i] == 1 {
                    vs += p;
                    vn += 1;
                } else if s.tongue.data()[i] == 1 {
                    ts += p;
                    tn += 1;
                }
            }
            let gap = ts / tn as f64 - vs / vn as f64;
            assert!(gap >= 30.0, "{}: gap {gap}", s.id);
        }
    }

    #[test]
    fn same_seed_same_pixels() {
        assert_eq!(synth_generate(3, 32, 48, 5).unwrap(), synth_generate(3, 32, 48, 5).unwrap());
        assert_ne!(synth_generate(1, 32, 32, 5).unwrap(), synth_generate(1, 32, 32, 6).unwrap());
    }

    #[test]
    fn size_must_be_multiple_of_16() {
        assert!(matches!(synth_generate(1, 50, 64, 0), Err(DataError::BadSize { .. })));
    }
}
