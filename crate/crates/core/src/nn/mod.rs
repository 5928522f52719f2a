//! Minimal tensor engine: dense NCHW tensors, a reverse-mode tape, the
//! layer set used by the U-Net, and a finite-difference gradient checker.

pub mod gradcheck;
pub mod graph;
mod kernels;
pub mod tensor;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use gradcheck::{gradient_check, gradient_check_f32, GradCheck, GradOp, LayerCheck};
pub use graph::{BatchMoments, Grads, Graph, Var};
pub use tensor::{Real, Shape, Tensor};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NnError {
    #[error("data length {len} does not match shape {shape}")]
    LengthMismatch { shape: Shape, len: usize },
    #[error("{op}: expected {expected} channels, got {got}")]
    ChannelMismatch { op: &'static str, expected: usize, got: usize },
    #[error("{op}: unexpected kernel shape {shape}")]
    KernelShape { op: &'static str, shape: Shape },
    #[error("{op}: bias has {got} values, expected {expected}")]
    BiasLength { op: &'static str, expected: usize, got: usize },
    #[error("{op}: zero-sized spatial dimensions")]
    EmptySpatial { op: &'static str },
    #[error("{op}: shape mismatch {a} vs {b}")]
    ShapeMismatch { op: &'static str, a: Shape, b: Shape },
    #[error("max_pool_2x2 needs even spatial dimensions, got {h}x{w}")]
    OddSpatial { h: usize, w: usize },
    #[error("batch_norm in training mode needs at least 2 values per channel, got {count}")]
    DegenerateBatch { count: usize },
    #[error("dropout rate {0} outside [0, 1)")]
    InvalidRate(f64),
    #[error("non-finite value produced by {op}")]
    NonFinite { op: &'static str },
    #[error("backward root must be a scalar, got {shape}")]
    NonScalarRoot { shape: Shape },
    #[error("{0}: empty input")]
    Empty(&'static str),
}

/// Hidden-layer nonlinearity.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Relu,
    LeakyRelu,
}

impl Activation {
    pub fn apply<T: Real>(self, g: &mut Graph<T>, x: Var) -> Result<Var, NnError> {
        match self {
            Activation::Relu => g.relu(x),
            Activation::LeakyRelu => g.leaky_relu(x, T::lit(0.01)),
        }
    }
}

/// A named model tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct Parameter<T> {
    pub name: String,
    pub value: Tensor<T>,
    /// Logical shape as persisted (e.g. `[c]` for a bias held as `1 x c x 1 x 1`).
    pub dims: Vec<usize>,
    pub trainable: bool,
    /// Included in the L2 penalty. True for convolution kernels only.
    pub weight_decayed: bool,
}

impl<T: Real> Parameter<T> {
    pub fn kernel(name: impl Into<String>, value: Tensor<T>) -> Self {
        let dims = value.shape().dims().to_vec();
        Parameter { name: name.into(), value, dims, trainable: true, weight_decayed: true }
    }

    /// Per-channel vector (bias, gamma, beta) stored as `1 x c x 1 x 1`.
    pub fn vector(name: impl Into<String>, values: Vec<T>) -> Self {
        let c = values.len();
        let value = Tensor::from_vec([1, c, 1, 1], values).expect("vector length");
        Parameter { name: name.into(), value, dims: vec![c], trainable: true, weight_decayed: false }
    }

    pub fn numel(&self) -> usize {
        self.value.len()
    }
}

/// Running statistics and constants of one batch-norm layer. The learned
/// scale and shift live in the model's parameter list.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchNormState<T> {
    pub running_mean: Vec<T>,
    pub running_var: Vec<T>,
    pub momentum: f64,
    pub eps: f64,
}

impl<T: Real> BatchNormState<T> {
    pub const DEFAULT_EPS: f64 = 1e-5;
    pub const DEFAULT_MOMENTUM: f64 = 0.9;

    pub fn new(channels: usize) -> Self {
        BatchNormState {
            running_mean: vec![T::zero(); channels],
            running_var: vec![T::one(); channels],
            momentum: Self::DEFAULT_MOMENTUM,
            eps: Self::DEFAULT_EPS,
        }
    }

    pub fn channels(&self) -> usize {
        self.running_mean.len()
    }

    /// `running = momentum * running + (1 - momentum) * batch`
    pub fn update(&mut self, batch: &BatchMoments<T>) {
        let m = T::lit(self.momentum);
        let rest = T::one() - m;
        for (r, &b) in self.running_mean.iter_mut().zip(&batch.mean) {
            *r = m * *r + rest * b;
        }
        for (r, &b) in self.running_var.iter_mut().zip(&batch.var) {
            *r = (m * *r + rest * b).max(T::zero());
        }
    }
}

/// Batch normalization that updates `state` in training mode and uses its
/// running estimates otherwise.
pub fn batch_norm<T: Real>(
    g: &mut Graph<T>,
    x: Var,
    gamma: Var,
    beta: Var,
    state: &mut BatchNormState<T>,
    training: bool,
) -> Result<Var, NnError> {
    let eps = T::lit(state.eps);
    if training {
        let (y, moments) = g.batch_norm_train(x, gamma, beta, eps)?;
        state.update(&moments);
        Ok(y)
    } else {
        g.batch_norm_eval(x, gamma, beta, &state.running_mean, &state.running_var, eps)
    }
}

/// Dropout as a free function, mirroring the other layer entry points.
pub fn dropout<T: Real, R: Rng + ?Sized>(
    g: &mut Graph<T>,
    x: Var,
    rate: f64,
    rng: &mut R,
    training: bool,
) -> Result<Var, NnError> {
    g.dropout(x, rate, training, rng)
}
