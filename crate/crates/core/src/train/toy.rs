//! Total loss of a two-level U-Net as a checkable function of its input and
//! every parameter.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::loss::total_loss;
use crate::nn::gradcheck::GradOp;
use crate::nn::{Graph, NnError, Real, Shape, Tensor, Var};
use crate::unet::{ModelError, UNet, UNetConfig};

/// Inputs are `[x, p_0, p_1, ...]` in the model's parameter order.
#[derive(Clone, Debug)]
pub struct ToyTotalLoss {
    pub config: UNetConfig,
    pub l2_scale: f64,
    pub input: Shape,
}

impl Default for ToyTotalLoss {
    fn default() -> Self {
        ToyTotalLoss {
            config: UNetConfig { base_filters: 2, depth: 2, ..UNetConfig::default() },
            l2_scale: 1e-2,
            input: Shape::new(2, 1, 8, 8),
        }
    }
}

const MODEL_SEED: u64 = 21;

impl ToyTotalLoss {
    fn model<T: Real>(&self) -> UNet<T> {
        UNet::build_seeded(self.config.clone(), MODEL_SEED).expect("toy config is valid")
    }

    fn label<T: Real>(&self) -> Tensor<T> {
        let mut rng = ChaCha8Rng::seed_from_u64(MODEL_SEED + 1);
        let data = (0..self.input.numel()).map(|_| T::lit(rng.gen_range(0..2) as f64)).collect();
        Tensor::from_vec(self.input, data).expect("label volume")
    }

    /// Input shape followed by every parameter shape.
    pub fn shapes(&self) -> Vec<Shape> {
        std::iter::once(self.input).chain(self.model::<f64>().params().iter().map(|p| p.value.shape())).collect()
    }
}

impl GradOp for ToyTotalLoss {
    fn name(&self) -> &str {
        "total_loss(toy_unet)"
    }

    fn apply<T: Real>(&self, g: &mut Graph<T>, inputs: &[Var]) -> Result<Var, NnError> {
        let mut model = self.model::<T>();
        // same dropout mask on every evaluation
        let mut rng = ChaCha8Rng::seed_from_u64(MODEL_SEED + 2);
        let pred = model.forward(g, &inputs[1..], inputs[0], true, &mut rng).map_err(|e| match e {
            ModelError::Nn(e) => e,
            other => panic!("toy model rejected its own input: {other}"),
        })?;
        Ok(total_loss(g, &model, &inputs[1..], pred, &self.label(), self.l2_scale)?.total)
    }

    /// Standard normal image; parameters at their initial values, with BN
    /// affine terms jittered away from 1 and 0.
    fn make_inputs(&self, _shapes: &[Shape], rng: &mut ChaCha8Rng) -> Vec<Tensor<f64>> {
        let x: Vec<f64> = (0..self.input.numel()).map(|_| StandardNormal.sample(rng)).collect();
        let mut out = vec![Tensor::from_vec(self.input, x).expect("input volume")];
        for p in self.model::<f64>().params() {
            let mut v = p.value.clone();
            if !p.weight_decayed {
                for e in v.data_mut() {
                    let n: f64 = StandardNormal.sample(rng);
                    *e += 0.1 * n;
                }
            }
            out.push(v);
        }
        out
    }
}
