use super::{Real, Tensor};
use crate::error::{Error, Result};

/// A named trainable tensor.
#[derive(Debug, Clone)]
pub struct Param<T: Real = f64> {
    pub name: String,
    pub tensor: Tensor<T>,
}

impl<T: Real> Param<T> {
    pub fn new(name: impl Into<String>, tensor: Tensor<T>) -> Self {
        Self {
            name: name.into(),
            tensor: tensor.with_grad(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    /// DCGAN settings: lr 2e-4, β₁ 0.5.
    fn default() -> Self {
        Self {
            learning_rate: 2e-4,
            beta1: 0.5,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Adam with bias-corrected moment estimates. Moments are kept in `f64`
/// regardless of the parameter element type.
#[derive(Debug, Clone)]
pub struct Adam {
    pub config: AdamConfig,
    step: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new<T: Real>(config: AdamConfig, params: &[Param<T>]) -> Self {
        Self {
            config,
            step: 0,
            first: params.iter().map(|p| vec![0.0; p.tensor.numel()]).collect(),
            second: params.iter().map(|p| vec![0.0; p.tensor.numel()]).collect(),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// Applies one update from the gradients currently stored on `params`.
    /// A parameter without a gradient is treated as having a zero gradient.
    /// Nothing is modified if any gradient is non-finite.
    pub fn step<T: Real>(&mut self, params: &[Param<T>]) -> Result<()> {
        if params.len() != self.first.len() {
            return Err(Error::invalid(format!(
                "optimizer tracks {} parameters, got {}",
                self.first.len(),
                params.len()
            )));
        }
        let grads: Vec<Option<Vec<T>>> = params.iter().map(|p| p.tensor.grad()).collect();
        for ((p, g), m) in params.iter().zip(&grads).zip(&self.first) {
            if p.tensor.numel() != m.len() {
                return Err(Error::ShapeMismatch {
                    op: "adam_step",
                    lhs: p.tensor.shape().to_vec(),
                    rhs: vec![m.len()],
                });
            }
            if g.as_ref().is_some_and(|g| g.iter().any(|v| !v.is_finite())) {
                return Err(Error::NonFiniteGradient(p.name.clone()));
            }
        }

        self.step += 1;
        let AdamConfig { learning_rate: lr, beta1: b1, beta2: b2, epsilon: eps } = self.config;
        let t = self.step as i32;
        let c1 = 1.0 - b1.powi(t);
        let c2 = 1.0 - b2.powi(t);
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            let (m, v) = (&mut self.first[i], &mut self.second[i]);
            let mut w = p.tensor.data_mut();
            for j in 0..w.len() {
                let gj = g.as_ref().map_or(0.0, |g| g[j].as_f64());
                m[j] = b1 * m[j] + (1.0 - b1) * gj;
                v[j] = b2 * v[j] + (1.0 - b2) * gj * gj;
                let update = lr * (m[j] / c1) / ((v[j] / c2).sqrt() + eps);
                w[j] = T::cast(w[j].as_f64() - update);
            }
        }
        Ok(())
    }
}

/// Clears the gradients of every parameter.
pub fn zero_grads<T: Real>(params: &[Param<T>]) {
    params.iter().for_each(|p| p.tensor.zero_grad());
}
