//! Finite-difference verification of analytic gradients.
//!
//! The op output is contracted with a fixed random projection so a single
//! backward pass yields the gradient of a scalar. Every input element is
//! then perturbed with a central difference and compared.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::graph::{Graph, Var};
use super::tensor::{Real, Shape, Tensor};
use super::NnError;

/// Relative step: `h = STEP * max(1, |x|)`.
pub const STEP: f64 = 1e-6;

/// Something whose input gradients can be checked in either precision.
pub trait GradOp {
    fn name(&self) -> &str;

    fn apply<T: Real>(&self, g: &mut Graph<T>, inputs: &[Var]) -> Result<Var, NnError>;

    /// Test inputs; standard normal entries by default.
    fn make_inputs(&self, shapes: &[Shape], rng: &mut ChaCha8Rng) -> Vec<Tensor<f64>> {
        random_inputs(shapes, rng)
    }
}

pub fn random_inputs(shapes: &[Shape], rng: &mut ChaCha8Rng) -> Vec<Tensor<f64>> {
    shapes
        .iter()
        .map(|&s| {
            let data = (0..s.numel()).map(|_| StandardNormal.sample(rng)).collect();
            Tensor::from_vec(s, data).expect("shape volume")
        })
        .collect()
}

fn run<T: Real, O: GradOp + ?Sized>(op: &O, inputs: &[Tensor<T>], leaves: bool) -> Result<(Graph<T>, Vec<Var>, Var), NnError> {
    let mut g = Graph::new();
    let vars: Vec<Var> =
        inputs.iter().map(|t| if leaves { g.leaf(t.clone()) } else { g.constant(t.clone()) }).collect();
    let out = op.apply(&mut g, &vars)?;
    Ok((g, vars, out))
}

fn outputs<O: GradOp + ?Sized>(op: &O, inputs: &[Tensor<f64>]) -> Result<Vec<f64>, NnError> {
    let (g, _, out) = run(op, inputs, false)?;
    let y = g.value(out).data().to_vec();
    if y.iter().any(|v| !v.is_finite()) {
        return Err(NnError::NonFinite { op: "gradient_check" });
    }
    Ok(y)
}

fn analytic<T: Real, O: GradOp + ?Sized>(op: &O, inputs: &[Tensor<f64>], proj: &[f64]) -> Result<Vec<Vec<f64>>, NnError> {
    let cast: Vec<Tensor<T>> = inputs.iter().map(|t| t.cast()).collect();
    let (g, vars, out) = run(op, &cast, true)?;
    let seed = Tensor::from_vec(g.shape(out), proj.iter().map(|&p| T::lit(p)).collect())?;
    let grads = g.backward_with(out, seed)?;
    Ok(vars.iter().map(|&v| grads.tensor(v).data().iter().map(|x| x.as_f64()).collect()).collect())
}

/// Agreement between analytic and finite-difference gradients.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradCheck {
    /// `|a - n| / max(|a|, |n|)` over the gradient of every input taken
    /// as one vector (Euclidean norms).
    pub rel_error: f64,
    /// Worst single element, `|a_i - n_i| / max(|a_i|, |n_i|, 1e-12)`.
    /// Unreliable for elements whose true gradient is zero or tiny, where
    /// the difference quotient is dominated by rounding noise.
    pub max_elementwise: f64,
}

fn compare<O: GradOp + ?Sized>(op: &O, inputs: Vec<Tensor<f64>>, seed: u64, single: bool) -> Result<GradCheck, NnError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_9e37);
    let (g, _, out) = run(op, &inputs, false)?;
    let out_len = g.value(out).len();
    drop(g);
    let proj: Vec<f64> = (0..out_len).map(|_| StandardNormal.sample(&mut rng)).collect();
    let grads = if single { analytic::<f32, O>(op, &inputs, &proj)? } else { analytic::<f64, O>(op, &inputs, &proj)? };

    let (mut diff2, mut a2, mut n2) = (0.0f64, 0.0f64, 0.0f64);
    let mut worst = 0.0f64;
    let mut work = inputs;
    for i in 0..work.len() {
        // indices, because `work` is lent out whole to `outputs` inside
        #[allow(clippy::needless_range_loop)]
        for j in 0..work[i].len() {
            let x0 = work[i].data()[j];
            let h = STEP * x0.abs().max(1.0);
            work[i].data_mut()[j] = x0 + h;
            let up = outputs(op, &work)?;
            work[i].data_mut()[j] = x0 - h;
            let down = outputs(op, &work)?;
            work[i].data_mut()[j] = x0;
            // divide by the step actually represented, and difference the
            // outputs before projecting so unaffected elements cancel exactly
            let step = (x0 + h) - (x0 - h);
            let delta: f64 = up.iter().zip(&down).zip(&proj).map(|((u, d), p)| (u - d) * p).sum();
            let numeric = delta / step;
            let a = grads[i][j];
            worst = worst.max((a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-12));
            diff2 += (a - numeric).powi(2);
            a2 += a * a;
            n2 += numeric * numeric;
        }
    }
    let denom = a2.sqrt().max(n2.sqrt()).max(1e-12);
    Ok(GradCheck { rel_error: diff2.sqrt() / denom, max_elementwise: worst })
}

/// 64-bit analytic gradient against central differences.
pub fn gradient_check<O: GradOp + ?Sized>(op: &O, input_shapes: &[Shape], seed: u64) -> Result<GradCheck, NnError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let inputs = op.make_inputs(input_shapes, &mut rng);
    compare(op, inputs, seed, false)
}

/// As [`gradient_check`] with explicit inputs.
pub fn gradient_check_inputs<O: GradOp + ?Sized>(op: &O, inputs: Vec<Tensor<f64>>, seed: u64) -> Result<GradCheck, NnError> {
    compare(op, inputs, seed, false)
}

/// 32-bit analytic gradient against 64-bit central differences.
pub fn gradient_check_f32<O: GradOp + ?Sized>(op: &O, input_shapes: &[Shape], seed: u64) -> Result<GradCheck, NnError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let inputs = op.make_inputs(input_shapes, &mut rng);
    compare(op, inputs, seed, true)
}

/// The per-layer checks run by the CLI and the test suites.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LayerCheck {
    Identity,
    Conv2d,
    TransposedConv2d,
    BatchNormTrain,
    BatchNormEval,
    Relu,
    Sigmoid,
    MaxPool,
    Concat,
    Dropout,
}

impl LayerCheck {
    pub const ALL: [LayerCheck; 10] = [
        LayerCheck::Identity,
        LayerCheck::Conv2d,
        LayerCheck::TransposedConv2d,
        LayerCheck::BatchNormTrain,
        LayerCheck::BatchNormEval,
        LayerCheck::Relu,
        LayerCheck::Sigmoid,
        LayerCheck::MaxPool,
        LayerCheck::Concat,
        LayerCheck::Dropout,
    ];

    pub fn shapes(self) -> Vec<Shape> {
        match self {
            LayerCheck::Identity => vec![Shape::new(1, 2, 3, 3)],
            LayerCheck::Conv2d => vec![Shape::new(2, 3, 6, 6), Shape::new(4, 3, 3, 3), Shape::new(1, 4, 1, 1)],
            LayerCheck::TransposedConv2d => {
                vec![Shape::new(2, 4, 4, 4), Shape::new(4, 3, 2, 2), Shape::new(1, 3, 1, 1)]
            }
            LayerCheck::BatchNormTrain | LayerCheck::BatchNormEval => {
                vec![Shape::new(2, 3, 4, 4), Shape::new(1, 3, 1, 1), Shape::new(1, 3, 1, 1)]
            }
            LayerCheck::Relu | LayerCheck::Sigmoid | LayerCheck::MaxPool | LayerCheck::Dropout => {
                vec![Shape::new(2, 3, 8, 8)]
            }
            LayerCheck::Concat => vec![Shape::new(2, 2, 4, 4), Shape::new(2, 3, 4, 4)],
        }
    }
}

impl GradOp for LayerCheck {
    fn name(&self) -> &str {
        match self {
            LayerCheck::Identity => "identity",
            LayerCheck::Conv2d => "conv2d",
            LayerCheck::TransposedConv2d => "transposed_conv2d",
            LayerCheck::BatchNormTrain => "batch_norm(train)",
            LayerCheck::BatchNormEval => "batch_norm(eval)",
            LayerCheck::Relu => "relu",
            LayerCheck::Sigmoid => "sigmoid",
            LayerCheck::MaxPool => "max_pool_2x2",
            LayerCheck::Concat => "concat_channels",
            LayerCheck::Dropout => "dropout",
        }
    }

    fn apply<T: Real>(&self, g: &mut Graph<T>, v: &[Var]) -> Result<Var, NnError> {
        match self {
            LayerCheck::Identity => Ok(v[0]),
            LayerCheck::Conv2d => g.conv2d(v[0], v[1], v[2]),
            LayerCheck::TransposedConv2d => g.conv_transpose2d(v[0], v[1], v[2]),
            LayerCheck::BatchNormTrain => Ok(g.batch_norm_train(v[0], v[1], v[2], T::lit(1e-5))?.0),
            LayerCheck::BatchNormEval => {
                let mean = [0.3, -0.2, 0.1].map(T::lit);
                let var = [1.5, 0.7, 2.0].map(T::lit);
                g.batch_norm_eval(v[0], v[1], v[2], &mean, &var, T::lit(1e-5))
            }
            LayerCheck::Relu => g.relu(v[0]),
            LayerCheck::Sigmoid => g.sigmoid(v[0]),
            LayerCheck::MaxPool => g.max_pool2x2(v[0]),
            LayerCheck::Concat => g.concat_channels(v[0], v[1]),
            LayerCheck::Dropout => {
                // same mask on every evaluation
                let mut rng = ChaCha8Rng::seed_from_u64(7);
                g.dropout(v[0], 0.3, true, &mut rng)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_is_exact() {
        let e = gradient_check(&LayerCheck::Identity, &LayerCheck::Identity.shapes(), 1).unwrap();
        assert!(e.rel_error < 1e-10 && e.max_elementwise < 1e-10, "{e:?}");
    }

    #[test]
    fn every_layer_passes_in_64_bit() {
        for layer in LayerCheck::ALL {
            let e = gradient_check(&layer, &layer.shapes(), 11).unwrap();
            assert!(e.rel_error < 1e-6 && e.max_elementwise < 1e-6, "{}: {e:?}", layer.name());
        }
    }

    #[test]
    fn every_layer_passes_in_32_bit() {
        for layer in LayerCheck::ALL {
            let e = gradient_check_f32(&layer, &layer.shapes(), 12).unwrap();
            assert!(e.rel_error < 1e-3 && e.max_elementwise < 1e-3, "{}: {e:?}", layer.name());
        }
    }

    #[test]
    fn conv2d_on_single_sample() {
        let shapes = [Shape::new(1, 2, 5, 5), Shape::new(3, 2, 3, 3), Shape::new(1, 3, 1, 1)];
        let e = gradient_check(&LayerCheck::Conv2d, &shapes, 3).unwrap();
        assert!(e.rel_error < 1e-6 && e.max_elementwise < 1e-6, "{e:?}");
    }

    #[test]
    fn batch_norm_on_four_samples() {
        let shapes = [Shape::new(4, 3, 4, 4), Shape::new(1, 3, 1, 1), Shape::new(1, 3, 1, 1)];
        let e = gradient_check(&LayerCheck::BatchNormTrain, &shapes, 4).unwrap();
        assert!(e.rel_error < 1e-6 && e.max_elementwise < 1e-6, "{e:?}");
    }

    struct Blowup;
    impl GradOp for Blowup {
        fn name(&self) -> &str {
            "blowup"
        }
        fn apply<T: Real>(&self, g: &mut Graph<T>, v: &[Var]) -> Result<Var, NnError> {
            let big = g.constant(Tensor::full(g.shape(v[0]), T::max_value()));
            let y = g.add(v[0], big)?;
            g.add(y, big)
        }
    }

    #[test]
    fn non_finite_values_are_errors() {
        let err = gradient_check(&Blowup, &[Shape::new(1, 1, 2, 2)], 0).unwrap_err();
        assert!(matches!(err, NnError::NonFinite { .. }));
    }
}
