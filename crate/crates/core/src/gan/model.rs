//! Generator and discriminator networks.

use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, Normal};

use super::config::GanConfig;
use crate::data::{Checkpoint, NamedTensor};
use crate::error::{Error, Result};
use crate::tensor::{
    batchnorm2d, conv2d, conv_transpose2d, dense, BatchNormMode, Param, Real, RunningStats, Tensor,
};

pub const KERNEL: usize = 5;
pub const STRIDE: usize = 2;
pub const PADDING: usize = 2;
pub const OUTPUT_PADDING: usize = 1;
pub const LEAKY_SLOPE: f64 = 0.2;
pub const BN_MOMENTUM: f64 = 0.1;
pub const BN_EPS: f64 = 1e-5;
const INIT_STD: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerKind {
    Dense,
    Conv,
    ConvTranspose,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    LeakyRelu,
    Tanh,
    /// Raw logit; the probability is its sigmoid.
    Logit,
}

/// One block of a network as declared by its configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerSpec {
    pub name: String,
    pub kind: LayerKind,
    /// Per-sample output shape.
    pub output: Vec<usize>,
    /// Kernel side and stride for convolutions, `None` for dense.
    pub kernel: Option<(usize, usize)>,
    pub batchnorm: bool,
    pub activation: Activation,
}

fn normal_tensor<T: Real>(shape: &[usize], mean: f64, rng: &mut impl Rng) -> Tensor<T> {
    let n: usize = shape.iter().product();
    let dist = Normal::new(mean, INIT_STD).expect("positive std");
    Tensor::from_f64(shape, &(0..n).map(|_| dist.sample(rng)).collect::<Vec<_>>()).expect("shape matches")
}

#[derive(Debug, Clone)]
struct BatchNorm<T: Real> {
    gamma: Tensor<T>,
    beta: Tensor<T>,
    stats: RunningStats,
}

impl<T: Real> BatchNorm<T> {
    fn apply(&mut self, x: &Tensor<T>, mode: BatchNormMode) -> Result<Tensor<T>> {
        batchnorm2d(x, &self.gamma, &self.beta, mode, &mut self.stats, BN_MOMENTUM, BN_EPS)
    }
}

/// Parameters and running statistics of a network, in declaration order.
#[derive(Debug, Clone)]
struct Layers<T: Real> {
    params: Vec<Param<T>>,
    norms: Vec<(String, BatchNorm<T>)>,
}

impl<T: Real> Layers<T> {
    fn new() -> Self {
        Self { params: Vec::new(), norms: Vec::new() }
    }

    fn add(&mut self, name: String, t: Tensor<T>) -> Tensor<T> {
        let p = Param::new(name, t);
        let handle = p.tensor.clone();
        self.params.push(p);
        handle
    }

    fn add_norm(&mut self, name: &str, channels: usize, rng: &mut impl Rng) -> usize {
        let gamma = self.add(format!("{name}.gamma"), normal_tensor(&[channels], 1.0, rng));
        let beta = self.add(format!("{name}.beta"), Tensor::zeros(&[channels]));
        self.norms.push((
            name.to_string(),
            BatchNorm { gamma, beta, stats: RunningStats::new(channels) },
        ));
        self.norms.len() - 1
    }

    fn to_checkpoint(&self, cfg: &GanConfig) -> Checkpoint {
        let mut tensors: Vec<NamedTensor> = self
            .params
            .iter()
            .map(|p| NamedTensor {
                name: p.name.clone(),
                shape: p.tensor.shape().to_vec(),
                data: p.tensor.data().iter().map(|v| v.as_f64() as f32).collect(),
            })
            .collect();
        for (name, bn) in &self.norms {
            for (suffix, vals) in [("running_mean", &bn.stats.mean), ("running_var", &bn.stats.var)] {
                tensors.push(NamedTensor {
                    name: format!("{name}.{suffix}"),
                    shape: vec![vals.len()],
                    data: vals.iter().map(|&v| v as f32).collect(),
                });
            }
        }
        Checkpoint { config: cfg.to_pairs(), tensors }
    }

    fn load(&mut self, ck: &Checkpoint) -> Result<()> {
        let expected = self.params.len() + 2 * self.norms.len();
        if ck.tensors.len() != expected {
            return Err(Error::invalid(format!(
                "checkpoint holds {} tensors, network expects {expected}",
                ck.tensors.len()
            )));
        }
        let fetch = |name: &str, shape: &[usize]| -> Result<&NamedTensor> {
            let t = ck
                .tensor(name)
                .ok_or_else(|| Error::invalid(format!("checkpoint lacks tensor `{name}`")))?;
            if t.shape != shape {
                return Err(Error::ShapeMismatch { op: "checkpoint load", lhs: t.shape.clone(), rhs: shape.to_vec() });
            }
            Ok(t)
        };
        for p in &self.params {
            let t = fetch(&p.name, p.tensor.shape())?;
            let mut d = p.tensor.data_mut();
            for (dst, &src) in d.iter_mut().zip(&t.data) {
                *dst = T::cast(src as f64);
            }
        }
        for (name, bn) in &mut self.norms {
            let c = bn.stats.mean.len();
            bn.stats.mean = fetch(&format!("{name}.running_mean"), &[c])?.data.iter().map(|&v| v as f64).collect();
            bn.stats.var = fetch(&format!("{name}.running_var"), &[c])?.data.iter().map(|&v| v as f64).collect();
        }
        Ok(())
    }
}

/// Maps latent vectors `[N, latent_dim]` to images `[N, 1, S, S]` in
/// `[−1, 1]`: dense projection to `8b × S/16 × S/16`, batchnorm + ReLU,
/// then four stride-2 transposed convolutions (batchnorm + ReLU on the
/// first three, tanh on the last).
#[derive(Debug, Clone)]
pub struct Generator<T: Real = f32> {
    cfg: GanConfig,
    layers: Layers<T>,
    project: (Tensor<T>, Tensor<T>),
    deconvs: Vec<(Tensor<T>, Tensor<T>)>,
}

/// Maps `[N, 2, S, S]` (image, quality plane) to one logit per sample:
/// four stride-2 convolutions with leaky ReLU (batchnorm on all but the
/// first), then a dense layer.
#[derive(Debug, Clone)]
pub struct Discriminator<T: Real = f32> {
    cfg: GanConfig,
    layers: Layers<T>,
    convs: Vec<(Tensor<T>, Tensor<T>)>,
    head: (Tensor<T>, Tensor<T>),
}

fn widths(b: usize) -> [usize; 5] {
    [8 * b, 4 * b, 2 * b, b, 1]
}

impl<T: Real> Generator<T> {
    pub fn new(cfg: &GanConfig, rng: &mut impl Rng) -> Result<Self> {
        cfg.validate()?;
        let w = widths(cfg.base_channels);
        let s0 = cfg.base_extent();
        let mut layers = Layers::new();
        let proj_out = w[0] * s0 * s0;
        let project = (
            layers.add("g.project.weight".into(), normal_tensor(&[proj_out, cfg.latent_dim], 0.0, rng)),
            layers.add("g.project.bias".into(), Tensor::zeros(&[proj_out])),
        );
        layers.add_norm("g.bn0", w[0], rng);
        let mut deconvs = Vec::new();
        for i in 0..4 {
            let weight = layers.add(
                format!("g.deconv{}.weight", i + 1),
                normal_tensor(&[w[i], w[i + 1], KERNEL, KERNEL], 0.0, rng),
            );
            let bias = layers.add(format!("g.deconv{}.bias", i + 1), Tensor::zeros(&[w[i + 1]]));
            deconvs.push((weight, bias));
            if i < 3 {
                layers.add_norm(&format!("g.bn{}", i + 1), w[i + 1], rng);
            }
        }
        Ok(Self { cfg: cfg.clone(), layers, project, deconvs })
    }

    pub fn config(&self) -> &GanConfig {
        &self.cfg
    }

    pub fn params(&self) -> &[Param<T>] {
        &self.layers.params
    }

    /// Declared block structure.
    pub fn architecture(&self) -> Vec<LayerSpec> {
        let w = widths(self.cfg.base_channels);
        let s0 = self.cfg.base_extent();
        let mut out = vec![LayerSpec {
            name: "project".into(),
            kind: LayerKind::Dense,
            output: vec![w[0], s0, s0],
            kernel: None,
            batchnorm: true,
            activation: Activation::Relu,
        }];
        for i in 0..4 {
            let s = s0 << (i + 1);
            out.push(LayerSpec {
                name: format!("deconv{}", i + 1),
                kind: LayerKind::ConvTranspose,
                output: vec![w[i + 1], s, s],
                kernel: Some((KERNEL, STRIDE)),
                batchnorm: i < 3,
                activation: if i < 3 { Activation::Relu } else { Activation::Tanh },
            });
        }
        out
    }

    pub fn forward(&mut self, z: &Tensor<T>, mode: BatchNormMode) -> Result<Tensor<T>> {
        self.forward_traced(z, mode, &mut Vec::new())
    }

    /// Forward pass that also records each block's output shape.
    pub fn forward_traced(&mut self, z: &Tensor<T>, mode: BatchNormMode, trace: &mut Vec<Vec<usize>>) -> Result<Tensor<T>> {
        let n = z.shape().first().copied().unwrap_or(0);
        if z.shape() != [n, self.cfg.latent_dim] {
            return Err(Error::ShapeMismatch {
                op: "generator",
                lhs: z.shape().to_vec(),
                rhs: vec![n, self.cfg.latent_dim],
            });
        }
        let s0 = self.cfg.base_extent();
        let c0 = 8 * self.cfg.base_channels;
        let x = dense(z, &self.project.0, &self.project.1)?.reshape(&[n, c0, s0, s0])?;
        let mut x = self.layers.norms[0].1.apply(&x, mode)?.relu();
        trace.push(x.shape().to_vec());
        for i in 0..4 {
            let (w, b) = &self.deconvs[i];
            let y = conv_transpose2d(&x, w, b, STRIDE, PADDING, OUTPUT_PADDING)?;
            x = if i < 3 {
                self.layers.norms[i + 1].1.apply(&y, mode)?.relu()
            } else {
                y.tanh()
            };
            trace.push(x.shape().to_vec());
        }
        Ok(x)
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        self.layers.to_checkpoint(&self.cfg)
    }

    /// Rebuilds a generator from a checkpoint written by
    /// [`Generator::to_checkpoint`].
    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let mut cfg = GanConfig::default();
        cfg.apply_pairs(ck.config.iter().map(|(k, v)| (k.as_str(), v.as_str())))?;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let mut g = Self::new(&cfg, &mut rng)?;
        g.layers.load(ck)?;
        Ok(g)
    }
}

impl<T: Real> Discriminator<T> {
    pub fn new(cfg: &GanConfig, rng: &mut impl Rng) -> Result<Self> {
        cfg.validate()?;
        let b = cfg.base_channels;
        let chans = [2, b, 2 * b, 4 * b, 8 * b];
        let mut layers = Layers::new();
        let mut convs = Vec::new();
        for i in 0..4 {
            let weight = layers.add(
                format!("d.conv{}.weight", i + 1),
                normal_tensor(&[chans[i + 1], chans[i], KERNEL, KERNEL], 0.0, rng),
            );
            let bias = layers.add(format!("d.conv{}.bias", i + 1), Tensor::zeros(&[chans[i + 1]]));
            convs.push((weight, bias));
            if i > 0 {
                layers.add_norm(&format!("d.bn{}", i + 1), chans[i + 1], rng);
            }
        }
        let s0 = cfg.base_extent();
        let flat = 8 * b * s0 * s0;
        let head = (
            layers.add("d.head.weight".into(), normal_tensor(&[1, flat], 0.0, rng)),
            layers.add("d.head.bias".into(), Tensor::zeros(&[1])),
        );
        Ok(Self { cfg: cfg.clone(), layers, convs, head })
    }

    pub fn config(&self) -> &GanConfig {
        &self.cfg
    }

    pub fn params(&self) -> &[Param<T>] {
        &self.layers.params
    }

    /// Enables or disables gradient tracking on every parameter.
    pub fn set_trainable(&self, on: bool) {
        self.layers.params.iter().for_each(|p| p.tensor.set_requires_grad(on));
    }

    pub fn architecture(&self) -> Vec<LayerSpec> {
        let b = self.cfg.base_channels;
        let chans = [b, 2 * b, 4 * b, 8 * b];
        let mut out: Vec<LayerSpec> = (0..4)
            .map(|i| {
                let s = self.cfg.image_size >> (i + 1);
                LayerSpec {
                    name: format!("conv{}", i + 1),
                    kind: LayerKind::Conv,
                    output: vec![chans[i], s, s],
                    kernel: Some((KERNEL, STRIDE)),
                    batchnorm: i > 0,
                    activation: Activation::LeakyRelu,
                }
            })
            .collect();
        out.push(LayerSpec {
            name: "head".into(),
            kind: LayerKind::Dense,
            output: vec![1],
            kernel: None,
            batchnorm: false,
            activation: Activation::Logit,
        });
        out
    }

    /// Logits `[N, 1]`.
    pub fn forward(&mut self, x: &Tensor<T>, mode: BatchNormMode) -> Result<Tensor<T>> {
        self.forward_traced(x, mode, &mut Vec::new())
    }

    pub fn forward_traced(&mut self, x: &Tensor<T>, mode: BatchNormMode, trace: &mut Vec<Vec<usize>>) -> Result<Tensor<T>> {
        let s = self.cfg.image_size;
        let n = x.shape().first().copied().unwrap_or(0);
        if x.shape() != [n, 2, s, s] {
            return Err(Error::ShapeMismatch { op: "discriminator", lhs: x.shape().to_vec(), rhs: vec![n, 2, s, s] });
        }
        let mut h = x.clone();
        for i in 0..4 {
            let (w, b) = &self.convs[i];
            let y = conv2d(&h, w, b, STRIDE, PADDING)?;
            let y = if i > 0 { self.layers.norms[i - 1].1.apply(&y, mode)? } else { y };
            h = y.leaky_relu(LEAKY_SLOPE);
            trace.push(h.shape().to_vec());
        }
        let flat = h.numel() / n.max(1);
        let logits = dense(&h.reshape(&[n, flat])?, &self.head.0, &self.head.1)?;
        trace.push(logits.shape().to_vec());
        Ok(logits)
    }

    /// Probabilities in `(0, 1)`, one per sample.
    pub fn probabilities(&mut self, x: &Tensor<T>, mode: BatchNormMode) -> Result<Vec<f64>> {
        Ok(self.forward(x, mode)?.sigmoid().to_f64_vec())
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        self.layers.to_checkpoint(&self.cfg)
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let mut cfg = GanConfig::default();
        cfg.apply_pairs(ck.config.iter().map(|(k, v)| (k.as_str(), v.as_str())))?;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let mut d = Self::new(&cfg, &mut rng)?;
        d.layers.load(ck)?;
        Ok(d)
    }
}
