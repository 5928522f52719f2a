//! Backward residual augmentation: the image is masked by the model's own
//! tongue prediction and the mask is added, subtracted, or left out.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{DataError, Plane};

/// Remainder of a random integer modulo 3.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BraSwitch(u8);

impl BraSwitch {
    pub const ADD: BraSwitch = BraSwitch(0);
    pub const SUBTRACT: BraSwitch = BraSwitch(1);
    pub const KEEP: BraSwitch = BraSwitch(2);

    pub fn from_integer(v: u64) -> Self {
        BraSwitch((v % 3) as u8)
    }

    /// Draws an integer uniformly from `[0, 2^31)` and reduces it mod 3.
    pub fn draw<R: Rng + ?Sized>(rng: &mut R) -> Self {
        Self::from_integer(rng.gen_range(0..1u64 << 31))
    }

    pub fn value(self) -> u8 {
        self.0
    }
}

/// `mask = image * prediction`; then `image + mask`, `image - mask` or
/// `image` depending on the switch. No clamping.
pub fn bra_combine(image: &Plane<f32>, prediction: &Plane<f32>, switch: BraSwitch) -> Result<Plane<f32>, DataError> {
    image.same_dims(prediction)?;
    let sign = match switch.0 {
        0 => 1.0f32,
        1 => -1.0,
        _ => return Ok(image.clone()),
    };
    let data = image.data().iter().zip(prediction.data()).map(|(&x, &p)| x + sign * (x * p)).collect();
    Plane::from_vec(image.height(), image.width(), data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn img() -> Plane<f32> {
        Plane::from_vec(2, 2, vec![1.0, -1.0, 2.0, 0.0]).unwrap()
    }

    #[test]
    fn worked_example_add() {
        let pred = Plane::from_vec(2, 2, vec![1.0, 0.5, 0.0, 1.0]).unwrap();
        let out = bra_combine(&img(), &pred, BraSwitch::ADD).unwrap();
        assert_eq!(out.data(), &[2.0, -1.5, 2.0, 0.0]);
    }

    #[test]
    fn zero_prediction_is_identity_for_every_switch() {
        let pred = Plane::filled(2, 2, 0.0);
        for s in 0..3 {
            assert_eq!(bra_combine(&img(), &pred, BraSwitch::from_integer(s)).unwrap(), img());
        }
    }

    #[test]
    fn full_prediction_doubles_or_zeroes() {
        let pred = Plane::filled(2, 2, 1.0);
        let doubled = bra_combine(&img(), &pred, BraSwitch::ADD).unwrap();
        assert_eq!(doubled.data(), &[2.0, -2.0, 4.0, 0.0]);
        let zeroed = bra_combine(&img(), &pred, BraSwitch::SUBTRACT).unwrap();
        assert!(zeroed.data().iter().all(|&v| v == 0.0));
        assert_eq!(bra_combine(&img(), &pred, BraSwitch::KEEP).unwrap(), img());
    }

    #[test]
    fn dimension_mismatch_rejected() {
        assert!(bra_combine(&img(), &Plane::filled(2, 3, 0.0), BraSwitch::ADD).is_err());
    }

    #[test]
    fn draws_cover_all_three_options() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut seen = [0usize; 3];
        for _ in 0..3000 {
            seen[BraSwitch::draw(&mut rng).value() as usize] += 1;
        }
        assert!(seen.iter().all(|&c| c > 900), "{seen:?}");
    }
}
