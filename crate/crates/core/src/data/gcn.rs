//! Global contrast normalization: per-image zero mean, unit population
//! standard deviation.

use super::Plane;

const EPS: f64 = 1e-8;

pub fn gcn_normalize(raster: &Plane<f32>) -> Plane<f32> {
    let n = raster.data().len().max(1) as f64;
    let mean = raster.data().iter().map(|&v| v as f64).sum::<f64>() / n;
    let var = raster.data().iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt().max(EPS);
    raster.map(|v| ((v as f64 - mean) / std) as f32)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn moments(p: &Plane<f32>) -> (f64, f64) {
        let n = p.data().len() as f64;
        let m = p.data().iter().map(|&v| v as f64).sum::<f64>() / n;
        let v = p.data().iter().map(|&x| (x as f64 - m).powi(2)).sum::<f64>() / n;
        (m, v.sqrt())
    }

    #[test]
    fn constant_image_maps_to_zero() {
        let out = gcn_normalize(&Plane::filled(4, 4, 93.0));
        assert!(out.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn two_value_image_maps_to_plus_minus_one() {
        let p = Plane::from_vec(2, 2, vec![0.0, 2.0, 2.0, 0.0]).unwrap();
        assert_eq!(gcn_normalize(&p).data(), &[-1.0, 1.0, 1.0, -1.0]);
    }

    #[test]
    fn random_image_is_standardized_and_idempotent() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let p = Plane::from_vec(64, 64, (0..4096).map(|_| rng.gen_range(0..256) as f32).collect()).unwrap();
        let once = gcn_normalize(&p);
        let (m, s) = moments(&once);
        assert!(m.abs() < 1e-5 && (s - 1.0).abs() < 1e-4, "{m} {s}");
        let twice = gcn_normalize(&once);
        for (a, b) in once.data().iter().zip(twice.data()) {
            assert!((a - b).abs() < 1e-4);
        }
    }
}
