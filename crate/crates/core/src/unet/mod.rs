//! The U-Net variant: four contracting levels of double 3x3 convolutions,
//! a bottleneck followed by dropout, four expansive levels built from a 2x2
//! stride-2 transposed convolution plus skip concatenation, and a 3x3 head
//! with a sigmoid. Every convolution except the head is followed by batch
//! norm and the hidden activation.

pub mod checkpoint;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::nn::{batch_norm, Activation, BatchNormState, Graph, NnError, Parameter, Real, Shape, Tensor, Var};
pub use checkpoint::{Checkpoint, CheckpointEntry, CheckpointError};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model configuration: {0}")]
    Config(String),
    #[error("input {h}x{w} is not divisible by {factor}")]
    Indivisible { h: usize, w: usize, factor: usize },
    #[error("expected {expected} input channels, got {got}")]
    InputChannels { expected: usize, got: usize },
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UNetConfig {
    pub base_filters: usize,
    /// Number of pooling levels; 4 by default.
    pub depth: usize,
    pub dropout_rate: f64,
    pub in_channels: usize,
    pub out_channels: usize,
    pub activation: Activation,
}

impl Default for UNetConfig {
    fn default() -> Self {
        UNetConfig {
            base_filters: 16,
            depth: 4,
            dropout_rate: 0.05,
            in_channels: 1,
            out_channels: 1,
            activation: Activation::Relu,
        }
    }
}

impl UNetConfig {
    pub fn with_base_filters(mut self, base: usize) -> Self {
        self.base_filters = base;
        self
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.base_filters == 0 {
            return Err(ModelError::Config("base_filters must be at least 1".into()));
        }
        if self.depth == 0 || self.depth > 8 {
            return Err(ModelError::Config(format!("depth {} outside 1..=8", self.depth)));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(ModelError::Config(format!("dropout rate {} outside [0, 1)", self.dropout_rate)));
        }
        if self.in_channels == 0 || self.out_channels == 0 {
            return Err(ModelError::Config("channel counts must be positive".into()));
        }
        Ok(())
    }

    /// Spatial extents must be multiples of this.
    pub fn size_multiple(&self) -> usize {
        1 << self.depth
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConvKind {
    /// 3x3 kernel, same padding, stride 1.
    Ordinary3x3,
    /// 2x2 kernel, stride 2.
    Transposed2x2,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvLayerInfo {
    pub name: String,
    pub kind: ConvKind,
    pub in_channels: usize,
    pub out_channels: usize,
}

#[derive(Clone, Debug)]
struct NormUnit {
    gamma: usize,
    beta: usize,
    state: usize,
}

#[derive(Clone, Debug)]
struct ConvUnit {
    kind: ConvKind,
    kernel: usize,
    bias: usize,
    norm: Option<NormUnit>,
}

#[derive(Clone, Debug)]
struct UpLevel {
    up: ConvUnit,
    convs: [ConvUnit; 2],
}

#[derive(Clone, Debug)]
pub struct UNet<T> {
    config: UNetConfig,
    params: Vec<Parameter<T>>,
    norms: Vec<(String, BatchNormState<T>)>,
    down: Vec<[ConvUnit; 2]>,
    bottom: [ConvUnit; 2],
    up: Vec<UpLevel>,
    head: ConvUnit,
    layers: Vec<ConvLayerInfo>,
}

struct Builder<'r, T, R> {
    rng: &'r mut R,
    params: Vec<Parameter<T>>,
    norms: Vec<(String, BatchNormState<T>)>,
    layers: Vec<ConvLayerInfo>,
}

impl<T: Real, R: Rng> Builder<'_, T, R> {
    fn conv(&mut self, name: &str, kind: ConvKind, c_in: usize, c_out: usize, norm: bool) -> ConvUnit {
        // fan-in scaled normal init
        let (shape, fan_in) = match kind {
            ConvKind::Ordinary3x3 => (Shape::new(c_out, c_in, 3, 3), c_in * 9),
            ConvKind::Transposed2x2 => (Shape::new(c_in, c_out, 2, 2), c_in),
        };
        let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("finite std");
        let data = (0..shape.numel()).map(|_| T::lit(normal.sample(self.rng))).collect();
        let kernel = self.params.len();
        self.params.push(Parameter::kernel(format!("{name}.kernel"), Tensor::from_vec(shape, data).expect("volume")));
        let bias = self.params.len();
        self.params.push(Parameter::vector(format!("{name}.bias"), vec![T::zero(); c_out]));
        let norm = norm.then(|| {
            let gamma = self.params.len();
            self.params.push(Parameter::vector(format!("{name}.bn.gamma"), vec![T::one(); c_out]));
            let beta = self.params.len();
            self.params.push(Parameter::vector(format!("{name}.bn.beta"), vec![T::zero(); c_out]));
            let state = self.norms.len();
            self.norms.push((format!("{name}.bn"), BatchNormState::new(c_out)));
            NormUnit { gamma, beta, state }
        });
        self.layers.push(ConvLayerInfo { name: name.to_owned(), kind, in_channels: c_in, out_channels: c_out });
        ConvUnit { kind, kernel, bias, norm }
    }
}

impl<T: Real> UNet<T> {
    pub fn build<R: Rng>(config: UNetConfig, rng: &mut R) -> Result<Self, ModelError> {
        config.validate()?;
        let mut b = Builder { rng, params: Vec::new(), norms: Vec::new(), layers: Vec::new() };
        let base = config.base_filters;
        let mut c_in = config.in_channels;
        let mut down = Vec::with_capacity(config.depth);
        for level in 0..config.depth {
            let c = base << level;
            let first = b.conv(&format!("enc{level}.conv0"), ConvKind::Ordinary3x3, c_in, c, true);
            let second = b.conv(&format!("enc{level}.conv1"), ConvKind::Ordinary3x3, c, c, true);
            down.push([first, second]);
            c_in = c;
        }
        let c_bottom = base << config.depth;
        let bottom = [
            b.conv("bottleneck.conv0", ConvKind::Ordinary3x3, c_in, c_bottom, true),
            b.conv("bottleneck.conv1", ConvKind::Ordinary3x3, c_bottom, c_bottom, true),
        ];
        let mut c_cur = c_bottom;
        let mut up = Vec::with_capacity(config.depth);
        for level in (0..config.depth).rev() {
            let c = base << level;
            let upc = b.conv(&format!("dec{level}.up"), ConvKind::Transposed2x2, c_cur, c, true);
            let first = b.conv(&format!("dec{level}.conv0"), ConvKind::Ordinary3x3, 2 * c, c, true);
            let second = b.conv(&format!("dec{level}.conv1"), ConvKind::Ordinary3x3, c, c, true);
            up.push(UpLevel { up: upc, convs: [first, second] });
            c_cur = c;
        }
        let head = b.conv("head", ConvKind::Ordinary3x3, base, config.out_channels, false);
        Ok(UNet { config, params: b.params, norms: b.norms, down, bottom, up, head, layers: b.layers })
    }

    /// Seeded convenience constructor.
    pub fn build_seeded(config: UNetConfig, seed: u64) -> Result<Self, ModelError> {
        Self::build(config, &mut ChaCha8Rng::seed_from_u64(seed))
    }

    pub fn config(&self) -> &UNetConfig {
        &self.config
    }

    pub fn params(&self) -> &[Parameter<T>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Parameter<T>] {
        &mut self.params
    }

    pub fn norm_states(&self) -> impl Iterator<Item = (&str, &BatchNormState<T>)> {
        self.norms.iter().map(|(n, s)| (n.as_str(), s))
    }

    /// Every convolution in forward order.
    pub fn layers(&self) -> &[ConvLayerInfo] {
        &self.layers
    }

    /// `(ordinary, transposed)` convolution counts.
    pub fn conv_census(&self) -> (usize, usize) {
        let ordinary = self.layers.iter().filter(|l| l.kind == ConvKind::Ordinary3x3).count();
        (ordinary, self.layers.len() - ordinary)
    }

    pub fn trainable_count(&self) -> usize {
        self.params.iter().filter(|p| p.trainable).map(Parameter::numel).sum()
    }

    /// Registers every parameter on `g` as a differentiable leaf.
    pub fn bind(&self, g: &mut Graph<T>) -> Vec<Var> {
        self.params.iter().map(|p| if p.trainable { g.leaf(p.value.clone()) } else { g.constant(p.value.clone()) }).collect()
    }

    /// Registers every parameter as a constant (frozen model).
    pub fn bind_frozen(&self, g: &mut Graph<T>) -> Vec<Var> {
        self.params.iter().map(|p| g.constant(p.value.clone())).collect()
    }

    /// Indices of parameters that enter the L2 penalty.
    pub fn decayed_indices(&self) -> Vec<usize> {
        self.params.iter().enumerate().filter(|(_, p)| p.weight_decayed).map(|(i, _)| i).collect()
    }

    pub fn check_input(&self, s: Shape) -> Result<(), ModelError> {
        let f = self.config.size_multiple();
        if s.h == 0 || s.w == 0 || !s.h.is_multiple_of(f) || !s.w.is_multiple_of(f) {
            return Err(ModelError::Indivisible { h: s.h, w: s.w, factor: f });
        }
        if s.c != self.config.in_channels {
            return Err(ModelError::InputChannels { expected: self.config.in_channels, got: s.c });
        }
        Ok(())
    }

    /// Forward pass. In training mode batch statistics are used and the
    /// running estimates are updated.
    pub fn forward<R: Rng + ?Sized>(
        &mut self,
        g: &mut Graph<T>,
        pv: &[Var],
        x: Var,
        training: bool,
        rng: &mut R,
    ) -> Result<Var, ModelError> {
        let mut norms = std::mem::take(&mut self.norms);
        let out = self.forward_with(g, pv, x, training, rng, &mut norms);
        self.norms = norms;
        out
    }

    /// Inference-mode forward pass over bound parameters.
    pub fn forward_eval(&self, g: &mut Graph<T>, pv: &[Var], x: Var) -> Result<Var, ModelError> {
        let mut norms = self.norms.clone();
        self.forward_with(g, pv, x, false, &mut NoRng, &mut norms)
    }

    fn forward_with<R: Rng + ?Sized>(
        &self,
        g: &mut Graph<T>,
        pv: &[Var],
        x: Var,
        training: bool,
        rng: &mut R,
        norms: &mut [(String, BatchNormState<T>)],
    ) -> Result<Var, ModelError> {
        self.check_input(g.shape(x))?;
        if pv.len() != self.params.len() {
            return Err(ModelError::Config(format!("{} bound parameters, model has {}", pv.len(), self.params.len())));
        }
        let act = self.config.activation;
        let mut unit = |g: &mut Graph<T>, u: &ConvUnit, h: Var| -> Result<Var, ModelError> {
            let y = match u.kind {
                ConvKind::Ordinary3x3 => g.conv2d(h, pv[u.kernel], pv[u.bias])?,
                ConvKind::Transposed2x2 => g.conv_transpose2d(h, pv[u.kernel], pv[u.bias])?,
            };
            match &u.norm {
                Some(n) => {
                    let y = batch_norm(g, y, pv[n.gamma], pv[n.beta], &mut norms[n.state].1, training)?;
                    Ok(act.apply(g, y)?)
                }
                None => Ok(y),
            }
        };
        let mut skips = Vec::with_capacity(self.down.len());
        let mut h = x;
        for [a, b] in &self.down {
            h = unit(g, a, h)?;
            h = unit(g, b, h)?;
            skips.push(h);
            h = g.max_pool2x2(h)?;
        }
        h = unit(g, &self.bottom[0], h)?;
        h = unit(g, &self.bottom[1], h)?;
        h = g.dropout(h, self.config.dropout_rate, training, rng)?;
        for level in &self.up {
            let u = unit(g, &level.up, h)?;
            let skip = skips.pop().expect("one skip per level");
            h = g.concat_channels(skip, u)?;
            h = unit(g, &level.convs[0], h)?;
            h = unit(g, &level.convs[1], h)?;
        }
        let logits = unit(g, &self.head, h)?;
        Ok(g.sigmoid(logits)?)
    }

    /// Per-pixel probabilities for a batch, inference mode.
    pub fn predict(&self, input: &Tensor<T>) -> Result<Tensor<T>, ModelError> {
        let mut g = Graph::new();
        let pv = self.bind_frozen(&mut g);
        let x = g.constant(input.clone());
        let y = self.forward_eval(&mut g, &pv, x)?;
        Ok(g.value(y).clone())
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut entries: Vec<CheckpointEntry> = self
            .params
            .iter()
            .map(|p| CheckpointEntry {
                name: p.name.clone(),
                dims: p.dims.clone(),
                values: p.value.data().iter().map(|v| v.as_f64() as f32).collect(),
            })
            .collect();
        for (name, s) in &self.norms {
            let c = s.channels();
            entries.push(CheckpointEntry {
                name: format!("{name}.running_mean"),
                dims: vec![c],
                values: s.running_mean.iter().map(|v| v.as_f64() as f32).collect(),
            });
            entries.push(CheckpointEntry {
                name: format!("{name}.running_var"),
                dims: vec![c],
                values: s.running_var.iter().map(|v| v.as_f64() as f32).collect(),
            });
        }
        Checkpoint::new(entries)
    }

    pub fn save_checkpoint(&self) -> Vec<u8> {
        self.to_checkpoint().to_bytes()
    }

    /// Restores every tensor. Validation happens before any write, so the
    /// model is untouched on error.
    pub fn load_checkpoint(&mut self, ck: &Checkpoint) -> Result<(), CheckpointError> {
        let mut expected: Vec<(String, Vec<usize>)> = self.params.iter().map(|p| (p.name.clone(), p.dims.clone())).collect();
        for (name, s) in &self.norms {
            expected.push((format!("{name}.running_mean"), vec![s.channels()]));
            expected.push((format!("{name}.running_var"), vec![s.channels()]));
        }
        for e in &ck.entries {
            let Some((_, dims)) = expected.iter().find(|(n, _)| *n == e.name) else {
                return Err(CheckpointError::UnknownName(e.name.clone()));
            };
            if *dims != e.dims {
                return Err(CheckpointError::ShapeMismatch { name: e.name.clone(), expected: dims.clone(), found: e.dims.clone() });
            }
            let n: usize = e.dims.iter().product();
            if n != e.values.len() {
                return Err(CheckpointError::ValueCount { name: e.name.clone(), expected: n, got: e.values.len() });
            }
        }
        for (name, _) in &expected {
            if ck.get(name).is_none() {
                return Err(CheckpointError::MissingName(name.clone()));
            }
        }
        let cast = |v: &[f32]| v.iter().map(|&x| T::lit(x as f64)).collect::<Vec<T>>();
        for p in &mut self.params {
            let e = ck.get(&p.name).expect("validated");
            p.value.data_mut().copy_from_slice(&cast(&e.values));
        }
        for (name, s) in &mut self.norms {
            s.running_mean = cast(&ck.get(&format!("{name}.running_mean")).expect("validated").values);
            s.running_var = cast(&ck.get(&format!("{name}.running_var")).expect("validated").values);
        }
        Ok(())
    }

    pub fn load_bytes(&mut self, bytes: &[u8]) -> Result<(), CheckpointError> {
        let ck = Checkpoint::from_bytes(bytes)?;
        self.load_checkpoint(&ck)
    }

    /// Builds a model whose architecture matches the checkpoint and loads it.
    pub fn from_checkpoint(ck: &Checkpoint, mut config: UNetConfig) -> Result<Self, ModelError> {
        let first = ck.get("enc0.conv0.kernel").ok_or_else(|| CheckpointError::MissingName("enc0.conv0.kernel".into()))?;
        config.base_filters = first.dims[0];
        config.in_channels = first.dims.get(1).copied().unwrap_or(1);
        config.depth = (0..).take_while(|l| ck.get(&format!("enc{l}.conv0.kernel")).is_some()).count();
        if let Some(head) = ck.get("head.kernel") {
            config.out_channels = head.dims[0];
        }
        let mut model = Self::build_seeded(config, 0)?;
        model.load_checkpoint(ck)?;
        Ok(model)
    }
}

/// RNG that is never consulted: inference-mode dropout is the identity.
struct NoRng;

impl rand::RngCore for NoRng {
    fn next_u32(&mut self) -> u32 {
        unreachable!("inference does not draw random numbers")
    }
    fn next_u64(&mut self) -> u64 {
        unreachable!("inference does not draw random numbers")
    }
    fn fill_bytes(&mut self, _: &mut [u8]) {
        unreachable!("inference does not draw random numbers")
    }
    fn try_fill_bytes(&mut self, _: &mut [u8]) -> Result<(), rand::Error> {
        unreachable!("inference does not draw random numbers")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> UNetConfig {
        UNetConfig::default().with_base_filters(4)
    }

    #[test]
    fn census_is_19_plus_4() {
        let m = UNet::<f32>::build_seeded(UNetConfig::default(), 0).unwrap();
        assert_eq!(m.conv_census(), (19, 4));
        assert_eq!(m.layers().len(), 23);
    }

    #[test]
    fn channel_doubling_and_halving() {
        let m = UNet::<f32>::build_seeded(small(), 0).unwrap();
        let outs: Vec<usize> = m.layers().iter().map(|l| l.out_channels).collect();
        assert_eq!(&outs[..10], &[4, 4, 8, 8, 16, 16, 32, 32, 64, 64]);
        // expansive path: up, conv0, conv1 per level, then head
        assert_eq!(&outs[10..], &[32, 32, 32, 16, 16, 16, 8, 8, 8, 4, 4, 4, 1]);
        let dec3_conv0 = m.layers().iter().find(|l| l.name == "dec3.conv0").unwrap();
        assert_eq!(dec3_conv0.in_channels, 64);
    }

    #[test]
    fn trainable_count_matches_closed_form() {
        let m = UNet::<f32>::build_seeded(small(), 0).unwrap();
        // independent sum over the layer list: kernel + bias (+ gamma, beta)
        let mut want = 0;
        for l in m.layers() {
            let taps = if l.kind == ConvKind::Ordinary3x3 { 9 } else { 4 };
            want += l.in_channels * l.out_channels * taps + l.out_channels;
            if l.name != "head" {
                want += 2 * l.out_channels;
            }
        }
        assert_eq!(m.trainable_count(), want);
        // hand-derived for base 4
        let b = 4usize;
        let mut closed = 0;
        let mut cin = 1;
        for lvl in 0..5 {
            let c = b << lvl;
            closed += (cin * c * 9 + c * 3) + (c * c * 9 + c * 3);
            cin = c;
        }
        for lvl in (0..4).rev() {
            let c = b << lvl;
            closed += cin * c * 4 + c * 3;
            closed += (2 * c * c * 9 + c * 3) + (c * c * 9 + c * 3);
            cin = c;
        }
        closed += b * 9 + 1;
        assert_eq!(want, closed);
    }

    #[test]
    fn only_kernels_are_decayed() {
        let m = UNet::<f32>::build_seeded(small(), 0).unwrap();
        for p in m.params() {
            assert_eq!(p.weight_decayed, p.name.ends_with(".kernel"), "{}", p.name);
        }
        let names: std::collections::HashSet<_> = m.params().iter().map(|p| p.name.as_str()).collect();
        assert_eq!(names.len(), m.params().len());
    }

    #[test]
    fn output_is_probability_map_of_input_size() {
        let m = UNet::<f32>::build_seeded(small(), 1).unwrap();
        let x = Tensor::from_vec([1, 1, 64, 64], (0..4096).map(|i| ((i as f32) * 0.01).sin()).collect()).unwrap();
        let y = m.predict(&x).unwrap();
        assert_eq!(y.shape(), Shape::new(1, 1, 64, 64));
        assert!(y.data().iter().all(|&v| v > 0.0 && v < 1.0));
        assert_eq!(m.predict(&x).unwrap(), y);
    }

    #[test]
    fn indivisible_input_rejected() {
        let m = UNet::<f32>::build_seeded(small(), 1).unwrap();
        let err = m.predict(&Tensor::zeros([1, 1, 40, 64])).unwrap_err();
        assert!(matches!(err, ModelError::Indivisible { h: 40, w: 64, factor: 16 }));
    }

    #[test]
    fn zero_base_filters_rejected() {
        assert!(UNet::<f32>::build_seeded(UNetConfig::default().with_base_filters(0), 0).is_err());
    }

    #[test]
    fn training_dropout_depends_on_seed() {
        let mut m = UNet::<f32>::build_seeded(small(), 2).unwrap();
        let x = Tensor::from_vec([2, 1, 32, 32], (0..2048).map(|i| ((i as f32) * 0.37).cos()).collect()).unwrap();
        let mut run = |seed| {
            let mut g = Graph::new();
            let pv = m.bind(&mut g);
            let xv = g.constant(x.clone());
            let y = m.forward(&mut g, &pv, xv, true, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            g.value(y).clone()
        };
        let a = run(1);
        let b = run(2);
        let differing = a.data().iter().zip(b.data()).filter(|(p, q)| p != q).count();
        assert!(differing > a.len() / 2, "{differing}");
    }

    #[test]
    fn checkpoint_round_trip_is_bit_exact() {
        let mut a = UNet::<f32>::build_seeded(small(), 3).unwrap();
        // move running stats away from their defaults
        let mut g = Graph::new();
        let pv = a.bind(&mut g);
        let x = g.constant(Tensor::from_vec([2, 1, 16, 16], (0..512).map(|i| (i % 7) as f32).collect()).unwrap());
        a.forward(&mut g, &pv, x, true, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let bytes = a.save_checkpoint();
        let mut b = UNet::<f32>::build_seeded(small(), 99).unwrap();
        b.load_bytes(&bytes).unwrap();
        for (p, q) in a.params().iter().zip(b.params()) {
            let pb: Vec<u32> = p.value.data().iter().map(|v| v.to_bits()).collect();
            let qb: Vec<u32> = q.value.data().iter().map(|v| v.to_bits()).collect();
            assert_eq!(pb, qb, "{}", p.name);
        }
        for ((_, s), (_, t)) in a.norm_states().zip(b.norm_states()) {
            assert_eq!(s.running_mean, t.running_mean);
            assert_eq!(s.running_var, t.running_var);
        }
        assert_eq!(b.save_checkpoint(), bytes);
    }

    #[test]
    fn truncated_checkpoint_leaves_model_untouched() {
        let a = UNet::<f32>::build_seeded(small(), 3).unwrap();
        let bytes = a.save_checkpoint();
        let mut b = UNet::<f32>::build_seeded(small(), 4).unwrap();
        let before = b.save_checkpoint();
        let err = b.load_bytes(&bytes[..bytes.len() - 3]).unwrap_err();
        assert!(matches!(err, CheckpointError::Truncated { .. }));
        assert_eq!(b.save_checkpoint(), before);
    }

    #[test]
    fn mismatched_width_names_offending_tensor() {
        let a = UNet::<f32>::build_seeded(UNetConfig::default(), 0).unwrap();
        let mut b = UNet::<f32>::build_seeded(UNetConfig::default().with_base_filters(32), 0).unwrap();
        let before = b.save_checkpoint();
        match b.load_bytes(&a.save_checkpoint()).unwrap_err() {
            CheckpointError::ShapeMismatch { name, expected, found } => {
                assert_eq!(name, "enc0.conv0.kernel");
                assert_eq!(expected, vec![32, 1, 3, 3]);
                assert_eq!(found, vec![16, 1, 3, 3]);
            }
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(b.save_checkpoint(), before);
    }

    #[test]
    fn unknown_and_missing_names_are_distinct_errors() {
        let a = UNet::<f32>::build_seeded(small(), 0).unwrap();
        let mut ck = a.to_checkpoint();
        ck.entries.push(CheckpointEntry::new("bogus", vec![1], vec![0.0]).unwrap());
        let mut b = a.clone();
        assert_eq!(b.load_checkpoint(&ck).unwrap_err(), CheckpointError::UnknownName("bogus".into()));
        ck.entries.pop();
        let removed = ck.entries.remove(0);
        assert_eq!(b.load_checkpoint(&ck).unwrap_err(), CheckpointError::MissingName(removed.name));
    }

    #[test]
    fn architecture_recovered_from_checkpoint() {
        let a = UNet::<f32>::build_seeded(small(), 5).unwrap();
        let b = UNet::<f32>::from_checkpoint(&a.to_checkpoint(), UNetConfig::default()).unwrap();
        assert_eq!(b.config().base_filters, 4);
        assert_eq!(b.config().depth, 4);
        assert_eq!(b.save_checkpoint(), a.save_checkpoint());
    }
}
