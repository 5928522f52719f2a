//! Tape-based reverse-mode differentiation.
//!
//! A [`Graph`] records every op applied to its variables. Calling
//! [`Graph::backward`] walks the tape in reverse and returns the gradient of
//! a scalar root with respect to every leaf created through [`Graph::leaf`].
//! Nodes built only from constants carry no gradient and are skipped.

use rand::Rng;

use super::kernels::{self, ConvDims};
use super::tensor::{all_finite, Real, Shape, Tensor};
use super::NnError;

/// Handle to a node on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Per-channel batch statistics produced by a training-mode batch norm.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchMoments<T> {
    pub mean: Vec<T>,
    pub var: Vec<T>,
}

enum Op<T> {
    Leaf,
    Constant,
    Conv2d { x: Var, k: Var, b: Var, cols: Vec<T> },
    ConvT2d { x: Var, k: Var, b: Var },
    BatchNorm { x: Var, gamma: Var, beta: Var, xhat: Vec<T>, inv_std: Vec<T>, batch_stats: bool },
    Relu { x: Var },
    LeakyRelu { x: Var, slope: T },
    Sigmoid { x: Var },
    MaxPool { x: Var, argmax: Vec<u32> },
    Dropout { x: Var, mask: Vec<T> },
    Concat { a: Var, b: Var },
    Add { a: Var, b: Var },
    Sub { a: Var, b: Var },
    Mul { a: Var, b: Var },
    Bce { pred: Var, label: Vec<T>, eps: T },
    SumSquares { xs: Vec<Var>, scale: T },
    Sum { x: Var },
}

impl<T> Op<T> {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Constant => "constant",
            Op::Conv2d { .. } => "conv2d",
            Op::ConvT2d { .. } => "transposed_conv2d",
            Op::BatchNorm { .. } => "batch_norm",
            Op::Relu { .. } => "relu",
            Op::LeakyRelu { .. } => "leaky_relu",
            Op::Sigmoid { .. } => "sigmoid",
            Op::MaxPool { .. } => "max_pool_2x2",
            Op::Dropout { .. } => "dropout",
            Op::Concat { .. } => "concat_channels",
            Op::Add { .. } => "add",
            Op::Sub { .. } => "sub",
            Op::Mul { .. } => "mul",
            Op::Bce { .. } => "cross_entropy",
            Op::SumSquares { .. } => "sum_squares",
            Op::Sum { .. } => "sum",
        }
    }
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    needs_grad: bool,
}

/// Gradients returned by [`Graph::backward`], indexed by leaf [`Var`].
pub struct Grads<T> {
    grads: Vec<Option<Vec<T>>>,
    shapes: Vec<Shape>,
}

impl<T: Real> Grads<T> {
    pub fn get(&self, v: Var) -> Option<&[T]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    /// Gradient as a tensor; zeros if the leaf did not influence the root.
    pub fn tensor(&self, v: Var) -> Tensor<T> {
        let shape = self.shapes[v.0];
        match self.get(v) {
            Some(g) => Tensor::from_vec(shape, g.to_vec()).expect("gradient length"),
            None => Tensor::zeros(shape),
        }
    }

    pub fn take(&mut self, v: Var) -> Option<Vec<T>> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }
}

#[derive(Default)]
pub struct Graph<T> {
    nodes: Vec<Node<T>>,
}

fn ensure_same<T: Real>(op: &'static str, a: &Tensor<T>, b: &Tensor<T>) -> Result<(), NnError> {
    if a.shape() != b.shape() {
        return Err(NnError::ShapeMismatch { op, a: a.shape(), b: b.shape() });
    }
    Ok(())
}

fn accumulate<T: Real>(slot: &mut Option<Vec<T>>, g: Vec<T>) {
    match slot {
        Some(acc) => {
            for (a, v) in acc.iter_mut().zip(g) {
                *a += v;
            }
        }
        None => *slot = Some(g),
    }
}

impl<T: Real> Graph<T> {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Input that never receives a gradient.
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.nodes.push(Node { value, op: Op::Constant, needs_grad: false });
        Var(self.nodes.len() - 1)
    }

    /// Differentiable input (a parameter or a checked input).
    pub fn leaf(&mut self, value: Tensor<T>) -> Var {
        self.nodes.push(Node { value, op: Op::Leaf, needs_grad: true });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> Shape {
        self.nodes[v.0].value.shape()
    }

    pub fn needs_grad(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, parents: &[Var]) -> Result<Var, NnError> {
        if !all_finite(value.data()) {
            return Err(NnError::NonFinite { op: op.name() });
        }
        let needs_grad = parents.iter().any(|p| self.nodes[p.0].needs_grad);
        self.nodes.push(Node { value, op, needs_grad });
        Ok(Var(self.nodes.len() - 1))
    }

    /// Same-padding 3x3 convolution with stride 1.
    ///
    /// `k` is `c_out x c_in x 3 x 3` and `b` holds `c_out` values.
    pub fn conv2d(&mut self, x: Var, k: Var, b: Var) -> Result<Var, NnError> {
        let (xs, ks) = (self.shape(x), self.shape(k));
        if ks.h != 3 || ks.w != 3 {
            return Err(NnError::KernelShape { op: "conv2d", shape: ks });
        }
        if xs.c != ks.c {
            return Err(NnError::ChannelMismatch { op: "conv2d", expected: ks.c, got: xs.c });
        }
        if xs.h == 0 || xs.w == 0 {
            return Err(NnError::EmptySpatial { op: "conv2d" });
        }
        if self.value(b).len() != ks.n {
            return Err(NnError::BiasLength { op: "conv2d", expected: ks.n, got: self.value(b).len() });
        }
        let d = ConvDims { n: xs.n, c_in: xs.c, c_out: ks.n, h: xs.h, w: xs.w };
        let keep_cols = self.needs_grad(k);
        let (out, cols) = kernels::conv3x3_forward(
            self.value(x).data(),
            self.value(k).data(),
            self.value(b).data(),
            &d,
            keep_cols,
        );
        let value = Tensor::from_vec(Shape::new(xs.n, ks.n, xs.h, xs.w), out)?;
        self.push(value, Op::Conv2d { x, k, b, cols }, &[x, k, b])
    }

    /// 2x2 transposed convolution with stride 2; doubles both spatial extents.
    ///
    /// `k` is `c_in x c_out x 2 x 2`. The op is the adjoint (input
    /// gradient) of a 2x2 stride-2 convolution with the same kernel.
    pub fn conv_transpose2d(&mut self, x: Var, k: Var, b: Var) -> Result<Var, NnError> {
        let (xs, ks) = (self.shape(x), self.shape(k));
        if ks.h != 2 || ks.w != 2 {
            return Err(NnError::KernelShape { op: "transposed_conv2d", shape: ks });
        }
        if xs.c != ks.n {
            return Err(NnError::ChannelMismatch { op: "transposed_conv2d", expected: ks.n, got: xs.c });
        }
        if xs.h == 0 || xs.w == 0 {
            return Err(NnError::EmptySpatial { op: "transposed_conv2d" });
        }
        if self.value(b).len() != ks.c {
            return Err(NnError::BiasLength { op: "transposed_conv2d", expected: ks.c, got: self.value(b).len() });
        }
        let d = ConvDims { n: xs.n, c_in: xs.c, c_out: ks.c, h: xs.h, w: xs.w };
        let out = kernels::convt2x2_forward(self.value(x).data(), self.value(k).data(), self.value(b).data(), &d);
        let value = Tensor::from_vec(Shape::new(xs.n, ks.c, 2 * xs.h, 2 * xs.w), out)?;
        self.push(value, Op::ConvT2d { x, k, b }, &[x, k, b])
    }

    fn check_bn_params(&self, x: Var, gamma: Var, beta: Var) -> Result<usize, NnError> {
        let c = self.shape(x).c;
        for p in [gamma, beta] {
            if self.value(p).len() != c {
                return Err(NnError::ChannelMismatch { op: "batch_norm", expected: c, got: self.value(p).len() });
            }
        }
        Ok(c)
    }

    /// Training-mode batch normalization over the `N*H*W` axis of each
    /// channel, followed by the learned affine map. Also returns the batch
    /// mean and (biased) variance so callers can update running estimates.
    pub fn batch_norm_train(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        eps: T,
    ) -> Result<(Var, BatchMoments<T>), NnError> {
        let c = self.check_bn_params(x, gamma, beta)?;
        let s = self.shape(x);
        let m = s.n * s.plane();
        if m < 2 {
            return Err(NnError::DegenerateBatch { count: m });
        }
        let xv = self.value(x).data();
        let g = self.value(gamma).data();
        let bt = self.value(beta).data();
        let hw = s.plane();
        let mut mean = vec![T::zero(); c];
        let mut var = vec![T::zero(); c];
        let mut inv_std = vec![T::zero(); c];
        let mut xhat = vec![T::zero(); xv.len()];
        let mut out = vec![T::zero(); xv.len()];
        for ch in 0..c {
            let mut acc = 0.0f64;
            for n in 0..s.n {
                acc += xv[(n * c + ch) * hw..][..hw].iter().map(|v| v.as_f64()).sum::<f64>();
            }
            let mu = acc / m as f64;
            let mut sq = 0.0f64;
            for n in 0..s.n {
                sq += xv[(n * c + ch) * hw..][..hw].iter().map(|v| (v.as_f64() - mu).powi(2)).sum::<f64>();
            }
            let sigma2 = sq / m as f64;
            let istd = T::lit(1.0 / (sigma2 + eps.as_f64()).sqrt());
            let mu_t = T::lit(mu);
            mean[ch] = mu_t;
            var[ch] = T::lit(sigma2);
            inv_std[ch] = istd;
            for n in 0..s.n {
                let base = (n * c + ch) * hw;
                for i in base..base + hw {
                    let xh = (xv[i] - mu_t) * istd;
                    xhat[i] = xh;
                    out[i] = g[ch] * xh + bt[ch];
                }
            }
        }
        let value = Tensor::from_vec(s, out)?;
        let v = self.push(value, Op::BatchNorm { x, gamma, beta, xhat, inv_std, batch_stats: true }, &[x, gamma, beta])?;
        Ok((v, BatchMoments { mean, var }))
    }

    /// Inference-mode batch normalization with fixed statistics.
    pub fn batch_norm_eval(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        mean: &[T],
        var: &[T],
        eps: T,
    ) -> Result<Var, NnError> {
        let c = self.check_bn_params(x, gamma, beta)?;
        if mean.len() != c || var.len() != c {
            return Err(NnError::ChannelMismatch { op: "batch_norm", expected: c, got: mean.len().min(var.len()) });
        }
        let s = self.shape(x);
        let hw = s.plane();
        let xv = self.value(x).data();
        let g = self.value(gamma).data();
        let bt = self.value(beta).data();
        let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
        let mut xhat = vec![T::zero(); xv.len()];
        let mut out = vec![T::zero(); xv.len()];
        for n in 0..s.n {
            for ch in 0..c {
                let base = (n * c + ch) * hw;
                for i in base..base + hw {
                    let xh = (xv[i] - mean[ch]) * inv_std[ch];
                    xhat[i] = xh;
                    out[i] = g[ch] * xh + bt[ch];
                }
            }
        }
        let value = Tensor::from_vec(s, out)?;
        self.push(value, Op::BatchNorm { x, gamma, beta, xhat, inv_std, batch_stats: false }, &[x, gamma, beta])
    }

    pub fn relu(&mut self, x: Var) -> Result<Var, NnError> {
        let value = self.value(x).map(|v| if v > T::zero() { v } else { T::zero() });
        self.push(value, Op::Relu { x }, &[x])
    }

    pub fn leaky_relu(&mut self, x: Var, slope: T) -> Result<Var, NnError> {
        let value = self.value(x).map(|v| if v > T::zero() { v } else { v * slope });
        self.push(value, Op::LeakyRelu { x, slope }, &[x])
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var, NnError> {
        let value = self.value(x).map(|v| T::one() / (T::one() + (-v).exp()));
        self.push(value, Op::Sigmoid { x }, &[x])
    }

    /// 2x2 max pooling with stride 2.
    pub fn max_pool2x2(&mut self, x: Var) -> Result<Var, NnError> {
        let s = self.shape(x);
        if !s.h.is_multiple_of(2) || !s.w.is_multiple_of(2) || s.h == 0 || s.w == 0 {
            return Err(NnError::OddSpatial { h: s.h, w: s.w });
        }
        let (oh, ow) = (s.h / 2, s.w / 2);
        let os = Shape::new(s.n, s.c, oh, ow);
        let xv = self.value(x).data();
        let mut out = Vec::with_capacity(os.numel());
        let mut argmax = Vec::with_capacity(os.numel());
        for nc in 0..s.n * s.c {
            let plane = &xv[nc * s.plane()..(nc + 1) * s.plane()];
            for y in 0..oh {
                for xx in 0..ow {
                    let mut best = 2 * y * s.w + 2 * xx;
                    for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                        let i = (2 * y + dy) * s.w + 2 * xx + dx;
                        if plane[i] > plane[best] {
                            best = i;
                        }
                    }
                    out.push(plane[best]);
                    argmax.push(best as u32);
                }
            }
        }
        let value = Tensor::from_vec(os, out)?;
        self.push(value, Op::MaxPool { x, argmax }, &[x])
    }

    /// Inverted dropout: survivors are scaled by `1 / (1 - rate)` so the
    /// op is the identity at inference time.
    pub fn dropout<R: Rng + ?Sized>(&mut self, x: Var, rate: f64, training: bool, rng: &mut R) -> Result<Var, NnError> {
        if !(0.0..1.0).contains(&rate) {
            return Err(NnError::InvalidRate(rate));
        }
        if !training || rate == 0.0 {
            return Ok(x);
        }
        let keep = T::lit(1.0 / (1.0 - rate));
        let n = self.value(x).len();
        let mask: Vec<T> = (0..n).map(|_| if rng.gen::<f64>() < rate { T::zero() } else { keep }).collect();
        let xv = self.value(x);
        let data = xv.data().iter().zip(&mask).map(|(&v, &m)| v * m).collect();
        let value = Tensor::from_vec(xv.shape(), data)?;
        self.push(value, Op::Dropout { x, mask }, &[x])
    }

    /// Concatenates along the channel axis, `a` first.
    pub fn concat_channels(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if (sa.n, sa.h, sa.w) != (sb.n, sb.h, sb.w) {
            return Err(NnError::ShapeMismatch { op: "concat_channels", a: sa, b: sb });
        }
        let out_shape = Shape::new(sa.n, sa.c + sb.c, sa.h, sa.w);
        let (pa, pb) = (sa.c * sa.plane(), sb.c * sb.plane());
        let mut data = Vec::with_capacity(out_shape.numel());
        for n in 0..sa.n {
            data.extend_from_slice(&self.value(a).data()[n * pa..(n + 1) * pa]);
            data.extend_from_slice(&self.value(b).data()[n * pb..(n + 1) * pb]);
        }
        let value = Tensor::from_vec(out_shape, data)?;
        self.push(value, Op::Concat { a, b }, &[a, b])
    }

    fn zip_op(&mut self, a: Var, b: Var, name: &'static str, f: impl Fn(T, T) -> T) -> Result<Tensor<T>, NnError> {
        ensure_same(name, self.value(a), self.value(b))?;
        let data = self.value(a).data().iter().zip(self.value(b).data()).map(|(&x, &y)| f(x, y)).collect();
        Tensor::from_vec(self.shape(a), data)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        let v = self.zip_op(a, b, "add", |x, y| x + y)?;
        self.push(v, Op::Add { a, b }, &[a, b])
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        let v = self.zip_op(a, b, "sub", |x, y| x - y)?;
        self.push(v, Op::Sub { a, b }, &[a, b])
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        let v = self.zip_op(a, b, "mul", |x, y| x * y)?;
        self.push(v, Op::Mul { a, b }, &[a, b])
    }

    /// Mean binary cross-entropy between probabilities and {0,1} labels.
    /// Predictions are clamped to `[eps, 1 - eps]`; the clamp passes no
    /// gradient outside that interval.
    pub fn binary_cross_entropy(&mut self, pred: Var, label: &Tensor<T>, eps: T) -> Result<Var, NnError> {
        ensure_same("cross_entropy", self.value(pred), label)?;
        let lo = eps;
        let hi = T::one() - eps;
        let m = label.len() as f64;
        let mut acc = 0.0f64;
        for (&p, &y) in self.value(pred).data().iter().zip(label.data()) {
            let p = p.max(lo).min(hi).as_f64();
            let y = y.as_f64();
            acc += y * p.ln() + (1.0 - y) * (1.0 - p).ln();
        }
        let value = Tensor::scalar(T::lit(-acc / m));
        self.push(value, Op::Bce { pred, label: label.data().to_vec(), eps }, &[pred])
    }

    /// `scale * sum(x^2)` over all listed variables.
    pub fn sum_squares(&mut self, xs: &[Var], scale: T) -> Result<Var, NnError> {
        let mut acc = 0.0f64;
        for &x in xs {
            acc += self.value(x).data().iter().map(|v| v.as_f64().powi(2)).sum::<f64>();
        }
        let value = Tensor::scalar(T::lit(scale.as_f64() * acc));
        self.push(value, Op::SumSquares { xs: xs.to_vec(), scale }, xs)
    }

    /// Sum of all elements as a scalar.
    pub fn sum(&mut self, x: Var) -> Result<Var, NnError> {
        let total = self.value(x).data().iter().map(|v| v.as_f64()).sum::<f64>();
        self.push(Tensor::scalar(T::lit(total)), Op::Sum { x }, &[x])
    }

    /// Gradients of a scalar root.
    pub fn backward(&self, root: Var) -> Result<Grads<T>, NnError> {
        let s = self.shape(root);
        if s.numel() != 1 {
            return Err(NnError::NonScalarRoot { shape: s });
        }
        self.backward_with(root, Tensor::full(s, T::one()))
    }

    /// Vector-Jacobian product: back-propagates `seed` from `root`.
    pub fn backward_with(&self, root: Var, seed: Tensor<T>) -> Result<Grads<T>, NnError> {
        ensure_same("backward", self.value(root), &seed)?;
        let mut grads: Vec<Option<Vec<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        if self.nodes[root.0].needs_grad {
            grads[root.0] = Some(seed.into_data());
        }
        for i in (0..=root.0).rev() {
            let node = &self.nodes[i];
            if matches!(node.op, Op::Leaf | Op::Constant) || !node.needs_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.backprop_node(node, &g, &mut grads)?;
        }
        let shapes = self.nodes.iter().map(|n| n.value.shape()).collect();
        for (i, n) in self.nodes.iter().enumerate() {
            if !matches!(n.op, Op::Leaf) {
                grads[i] = None;
            }
        }
        Ok(Grads { grads, shapes })
    }

    fn backprop_node(&self, node: &Node<T>, g: &[T], grads: &mut [Option<Vec<T>>]) -> Result<(), NnError> {
        let needs = |v: Var| self.nodes[v.0].needs_grad;
        let mut emit = |v: Var, d: Vec<T>| -> Result<(), NnError> {
            if !all_finite(&d) {
                return Err(NnError::NonFinite { op: node.op.name() });
            }
            accumulate(&mut grads[v.0], d);
            Ok(())
        };
        match &node.op {
            Op::Leaf | Op::Constant => {}
            Op::Conv2d { x, k, b, cols } => {
                let (xs, ks) = (self.shape(*x), self.shape(*k));
                let d = ConvDims { n: xs.n, c_in: xs.c, c_out: ks.n, h: xs.h, w: xs.w };
                let (dx, dk, db) = kernels::conv3x3_backward(g, self.value(*k).data(), cols, &d, needs(*x), needs(*k));
                if let Some(dx) = dx {
                    emit(*x, dx)?;
                }
                if let Some(dk) = dk {
                    emit(*k, dk)?;
                }
                if needs(*b) {
                    emit(*b, db)?;
                }
            }
            Op::ConvT2d { x, k, b } => {
                let (xs, ks) = (self.shape(*x), self.shape(*k));
                let d = ConvDims { n: xs.n, c_in: xs.c, c_out: ks.c, h: xs.h, w: xs.w };
                let (dx, dk, db) =
                    kernels::convt2x2_backward(g, self.value(*x).data(), self.value(*k).data(), &d, needs(*x), needs(*k));
                if let Some(dx) = dx {
                    emit(*x, dx)?;
                }
                if let Some(dk) = dk {
                    emit(*k, dk)?;
                }
                if needs(*b) {
                    emit(*b, db)?;
                }
            }
            Op::BatchNorm { x, gamma, beta, xhat, inv_std, batch_stats } => {
                let s = self.shape(*x);
                let c = s.c;
                let hw = s.plane();
                let m = (s.n * hw) as f64;
                let gam = self.value(*gamma).data();
                let mut dgamma = vec![0.0f64; c];
                let mut dbeta = vec![0.0f64; c];
                for n in 0..s.n {
                    for ch in 0..c {
                        let base = (n * c + ch) * hw;
                        for i in base..base + hw {
                            dgamma[ch] += (g[i] * xhat[i]).as_f64();
                            dbeta[ch] += g[i].as_f64();
                        }
                    }
                }
                if needs(*x) {
                    let mut dx = vec![T::zero(); g.len()];
                    for ch in 0..c {
                        let gm = gam[ch];
                        let istd = inv_std[ch];
                        if *batch_stats {
                            // dx = istd/m * (m*dxhat - sum(dxhat) - xhat*sum(dxhat*xhat))
                            let sum_d = T::lit(gm.as_f64() * dbeta[ch] / m);
                            let sum_dx = T::lit(gm.as_f64() * dgamma[ch] / m);
                            for n in 0..s.n {
                                let base = (n * c + ch) * hw;
                                for i in base..base + hw {
                                    dx[i] = istd * (g[i] * gm - sum_d - xhat[i] * sum_dx);
                                }
                            }
                        } else {
                            for n in 0..s.n {
                                let base = (n * c + ch) * hw;
                                for i in base..base + hw {
                                    dx[i] = g[i] * gm * istd;
                                }
                            }
                        }
                    }
                    emit(*x, dx)?;
                }
                if needs(*gamma) {
                    emit(*gamma, dgamma.into_iter().map(T::lit).collect())?;
                }
                if needs(*beta) {
                    emit(*beta, dbeta.into_iter().map(T::lit).collect())?;
                }
            }
            Op::Relu { x } => {
                let xv = self.value(*x).data();
                let d = g.iter().zip(xv).map(|(&gi, &v)| if v > T::zero() { gi } else { T::zero() }).collect();
                emit(*x, d)?;
            }
            Op::LeakyRelu { x, slope } => {
                let xv = self.value(*x).data();
                let d = g.iter().zip(xv).map(|(&gi, &v)| if v > T::zero() { gi } else { gi * *slope }).collect();
                emit(*x, d)?;
            }
            Op::Sigmoid { x } => {
                let y = node.value.data();
                let d = g.iter().zip(y).map(|(&gi, &yi)| gi * yi * (T::one() - yi)).collect();
                emit(*x, d)?;
            }
            Op::MaxPool { x, argmax } => {
                let s = self.shape(*x);
                let per_in = s.plane();
                let per_out = per_in / 4;
                let mut dx = vec![T::zero(); s.numel()];
                for (o, (&gi, &am)) in g.iter().zip(argmax).enumerate() {
                    let plane = o / per_out;
                    dx[plane * per_in + am as usize] += gi;
                }
                emit(*x, dx)?;
            }
            Op::Dropout { x, mask } => {
                emit(*x, g.iter().zip(mask).map(|(&a, &b)| a * b).collect())?;
            }
            Op::Concat { a, b } => {
                let (sa, sb) = (self.shape(*a), self.shape(*b));
                let (pa, pb) = (sa.c * sa.plane(), sb.c * sb.plane());
                if needs(*a) {
                    let mut da = Vec::with_capacity(sa.numel());
                    for n in 0..sa.n {
                        da.extend_from_slice(&g[n * (pa + pb)..][..pa]);
                    }
                    emit(*a, da)?;
                }
                if needs(*b) {
                    let mut db = Vec::with_capacity(sb.numel());
                    for n in 0..sa.n {
                        db.extend_from_slice(&g[n * (pa + pb) + pa..][..pb]);
                    }
                    emit(*b, db)?;
                }
            }
            Op::Add { a, b } => {
                if needs(*a) {
                    emit(*a, g.to_vec())?;
                }
                if needs(*b) {
                    emit(*b, g.to_vec())?;
                }
            }
            Op::Sub { a, b } => {
                if needs(*a) {
                    emit(*a, g.to_vec())?;
                }
                if needs(*b) {
                    emit(*b, g.iter().map(|&v| -v).collect())?;
                }
            }
            Op::Mul { a, b } => {
                if needs(*a) {
                    let bv = self.value(*b).data();
                    emit(*a, g.iter().zip(bv).map(|(&gi, &v)| gi * v).collect())?;
                }
                if needs(*b) {
                    let av = self.value(*a).data();
                    emit(*b, g.iter().zip(av).map(|(&gi, &v)| gi * v).collect())?;
                }
            }
            Op::Bce { pred, label, eps } => {
                let scale = g[0] / T::lit(label.len() as f64);
                let lo = *eps;
                let hi = T::one() - *eps;
                let d = self
                    .value(*pred)
                    .data()
                    .iter()
                    .zip(label)
                    .map(|(&p, &y)| {
                        if p < lo || p > hi {
                            T::zero()
                        } else {
                            scale * (p - y) / (p * (T::one() - p))
                        }
                    })
                    .collect();
                emit(*pred, d)?;
            }
            Op::SumSquares { xs, scale } => {
                let f = g[0] * *scale * T::lit(2.0);
                for &x in xs {
                    if needs(x) {
                        emit(x, self.value(x).data().iter().map(|&v| f * v).collect())?;
                    }
                }
            }
            Op::Sum { x } => {
                emit(*x, vec![g[0]; self.value(*x).len()])?;
            }
        }
        Ok(())
    }
}
