use super::{Real, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BatchNormMode {
    Train,
    Eval,
}

/// Per-channel running mean/variance tracked across training batches.
#[derive(Debug, Clone, PartialEq)]
pub struct RunningStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

impl RunningStats {
    pub fn new(channels: usize) -> Self {
        Self {
            mean: vec![0.0; channels],
            var: vec![1.0; channels],
        }
    }
}

/// Batch normalization over `[N, C, ...]`: statistics are taken per channel
/// across the batch and all trailing axes.
///
/// In train mode the batch statistics normalize the input and the running
/// stats are updated as `r ← (1 − momentum)·r + momentum·batch` (unbiased
/// variance), rounded to the element type's precision. In eval mode the
/// running stats are used instead.
pub fn batchnorm2d<T: Real>(
    input: &Tensor<T>,
    gamma: &Tensor<T>,
    beta: &Tensor<T>,
    mode: BatchNormMode,
    stats: &mut RunningStats,
    momentum: f64,
    eps: f64,
) -> Result<Tensor<T>> {
    let shape = input.shape().to_vec();
    if shape.len() < 2 {
        return Err(Error::invalid(format!("batchnorm needs [N, C, ...], got {shape:?}")));
    }
    let (n, c) = (shape[0], shape[1]);
    let plane: usize = shape[2..].iter().product();
    if gamma.shape() != [c] || beta.shape() != [c] || stats.mean.len() != c {
        return Err(Error::ShapeMismatch {
            op: "batchnorm2d",
            lhs: shape,
            rhs: gamma.shape().to_vec(),
        });
    }
    if mode == BatchNormMode::Train && n < 2 {
        return Err(Error::BatchTooSmall(n));
    }
    let m = (n * plane) as f64;
    let x = input.data();

    let (mean, var) = match mode {
        BatchNormMode::Train => {
            let mut mean = vec![0.0f64; c];
            let mut var = vec![0.0f64; c];
            for ch in 0..c {
                let mut acc = 0.0;
                for s in 0..n {
                    let off = (s * c + ch) * plane;
                    acc += x[off..off + plane].iter().map(|v| v.as_f64()).sum::<f64>();
                }
                mean[ch] = acc / m;
                let mut sq = 0.0;
                for s in 0..n {
                    let off = (s * c + ch) * plane;
                    sq += x[off..off + plane].iter().map(|v| (v.as_f64() - mean[ch]).powi(2)).sum::<f64>();
                }
                var[ch] = sq / m;
            }
            for ch in 0..c {
                let unbiased = if m > 1.0 { var[ch] * m / (m - 1.0) } else { var[ch] };
                stats.mean[ch] = T::cast((1.0 - momentum) * stats.mean[ch] + momentum * mean[ch]).as_f64();
                stats.var[ch] = T::cast((1.0 - momentum) * stats.var[ch] + momentum * unbiased).as_f64();
            }
            (mean, var)
        }
        BatchNormMode::Eval => (stats.mean.clone(), stats.var.clone()),
    };

    let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + eps).sqrt()).collect();
    let mut xhat = vec![T::zero(); x.len()];
    let mut out = vec![T::zero(); x.len()];
    {
        let (gm, bt) = (gamma.data(), beta.data());
        for s in 0..n {
            for ch in 0..c {
                let off = (s * c + ch) * plane;
                let (mu, is) = (T::cast(mean[ch]), T::cast(inv_std[ch]));
                for i in off..off + plane {
                    let xh = (x[i] - mu) * is;
                    xhat[i] = xh;
                    out[i] = gm[ch] * xh + bt[ch];
                }
            }
        }
    }
    drop(x);

    Ok(Tensor::from_op(
        shape,
        out,
        vec![input.clone(), gamma.clone(), beta.clone()],
        move |g, p| {
            let gm = p[1].data();
            let mut dgamma = vec![T::zero(); c];
            let mut dbeta = vec![T::zero(); c];
            let mut sum_dxhat = vec![T::zero(); c];
            let mut sum_dxhat_xhat = vec![T::zero(); c];
            for s in 0..n {
                for ch in 0..c {
                    let off = (s * c + ch) * plane;
                    for i in off..off + plane {
                        dgamma[ch] = dgamma[ch] + g[i] * xhat[i];
                        dbeta[ch] = dbeta[ch] + g[i];
                        let dxh = g[i] * gm[ch];
                        sum_dxhat[ch] = sum_dxhat[ch] + dxh;
                        sum_dxhat_xhat[ch] = sum_dxhat_xhat[ch] + dxh * xhat[i];
                    }
                }
            }
            let dx = p[0].requires_grad().then(|| {
                let mut dx = vec![T::zero(); g.len()];
                let mt = T::cast(m);
                for s in 0..n {
                    for ch in 0..c {
                        let off = (s * c + ch) * plane;
                        let is = T::cast(inv_std[ch]);
                        for i in off..off + plane {
                            let dxh = g[i] * gm[ch];
                            dx[i] = match mode {
                                BatchNormMode::Train => {
                                    is * (dxh * mt - sum_dxhat[ch] - xhat[i] * sum_dxhat_xhat[ch]) / mt
                                }
                                BatchNormMode::Eval => dxh * is,
                            };
                        }
                    }
                }
                dx
            });
            vec![dx, Some(dgamma), Some(dbeta)]
        },
    ))
}
