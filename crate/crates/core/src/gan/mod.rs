//! Quality-conditioned DCGAN: networks, losses, the first-quartile quality
//! gate, the alternating training loop and sampling.

mod config;
mod model;
mod train;

pub use config::{GanConfig, IMAGE_SIZES};
pub use model::{
    Activation, Discriminator, Generator, LayerKind, LayerSpec, BN_EPS, BN_MOMENTUM, KERNEL, LEAKY_SLOPE,
    OUTPUT_PADDING, PADDING, STRIDE,
};
pub use train::{train, PreparedBatch, StepLog, TrainLog, TrainOutcome, Trainer};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::image::GrayImage;
use crate::tensor::{BatchNormMode, Real, Tensor};

/// Probability clamp used by the losses.
pub const PROB_EPS: f64 = 1e-7;

fn check_probs(p: &[f64], what: &str) -> Result<()> {
    if p.is_empty() {
        return Err(Error::Empty(format!("{what} batch")));
    }
    if p.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid(format!("{what} probabilities must be finite")));
    }
    Ok(())
}

/// `−mean[ln d_real] − mean[ln(1 − d_fake)]`, probabilities clamped to
/// `[1e-7, 1 − 1e-7]`.
pub fn d_loss(d_real: &[f64], d_fake: &[f64]) -> Result<f64> {
    check_probs(d_real, "real")?;
    check_probs(d_fake, "fake")?;
    let clamp = |p: f64| p.clamp(PROB_EPS, 1.0 - PROB_EPS);
    let real = d_real.iter().map(|&p| clamp(p).ln()).sum::<f64>() / d_real.len() as f64;
    let fake = d_fake.iter().map(|&p| (1.0 - clamp(p)).ln()).sum::<f64>() / d_fake.len() as f64;
    Ok(-(real + fake))
}

/// Non-saturating generator loss `−mean[ln d_fake]`.
pub fn g_loss(d_fake: &[f64]) -> Result<f64> {
    check_probs(d_fake, "fake")?;
    Ok(-d_fake.iter().map(|&p| p.clamp(PROB_EPS, 1.0 - PROB_EPS).ln()).sum::<f64>() / d_fake.len() as f64)
}

/// [`d_loss`] on logits: `mean softplus(−l_real) + mean softplus(l_fake)`.
pub fn d_loss_logits<T: Real>(real: &Tensor<T>, fake: &Tensor<T>) -> Result<Tensor<T>> {
    real.neg().softplus().mean()?.add(&fake.softplus().mean()?)
}

/// [`g_loss`] on logits: `mean softplus(−l_fake)`.
pub fn g_loss_logits<T: Real>(fake: &Tensor<T>) -> Result<Tensor<T>> {
    fake.neg().softplus().mean()
}

/// 25th percentile with linear interpolation between order statistics.
pub fn first_quartile(scores: &[f64]) -> Result<f64> {
    if scores.is_empty() {
        return Err(Error::Empty("quartile of no scores".into()));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::invalid("quality scores must be finite"));
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    let pos = 0.25 * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    Ok(sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo]))
}

/// Indices whose score is strictly above the first quartile, in input
/// order. All-equal scores keep nothing.
pub fn quartile_gate_indices(scores: &[f64]) -> Result<Vec<usize>> {
    let q1 = first_quartile(scores)?;
    Ok((0..scores.len()).filter(|&i| scores[i] > q1).collect())
}

/// Items whose score is strictly above the first quartile.
pub fn quartile_gate<I: Clone>(items: &[I], scores: &[f64]) -> Result<Vec<I>> {
    if items.len() != scores.len() {
        return Err(Error::invalid(format!("{} items but {} scores", items.len(), scores.len())));
    }
    Ok(quartile_gate_indices(scores)?.into_iter().map(|i| items[i].clone()).collect())
}

/// Stacks images into `[N, 1, H, W]`, mapping intensity `[0, 1]` to the
/// generator's `[−1, 1]` range.
pub fn image_batch<T: Real>(images: &[GrayImage]) -> Result<Tensor<T>> {
    let first = images.first().ok_or_else(|| Error::Empty("image batch".into()))?;
    let (w, h) = (first.width(), first.height());
    let mut data = Vec::with_capacity(images.len() * w * h);
    for img in images {
        if (img.width(), img.height()) != (w, h) {
            return Err(Error::ShapeMismatch {
                op: "image_batch",
                lhs: vec![h, w],
                rhs: vec![img.height(), img.width()],
            });
        }
        data.extend(img.pixels().iter().map(|&v| T::cast(2.0 * v - 1.0)));
    }
    Tensor::new(&[images.len(), 1, h, w], data)
}

/// Inverse of [`image_batch`]: `[N, 1, H, W]` in `[−1, 1]` to images.
pub fn to_images<T: Real>(batch: &Tensor<T>) -> Result<Vec<GrayImage>> {
    let &[n, 1, h, w] = batch.shape() else {
        return Err(Error::invalid(format!("expected [N, 1, H, W], got {:?}", batch.shape())));
    };
    let data = batch.data();
    (0..n)
        .map(|i| {
            let px = data[i * h * w..(i + 1) * h * w]
                .iter()
                .map(|v| ((v.as_f64() + 1.0) / 2.0).clamp(0.0, 1.0))
                .collect();
            GrayImage::new(w, h, px)
        })
        .collect()
}

/// Appends a constant plane holding each sample's quality score:
/// `[N, 1, H, W]` → `[N, 2, H, W]`.
pub fn attach_quality<T: Real>(batch: &Tensor<T>, q: &[f64]) -> Result<Tensor<T>> {
    let &[n, 1, h, w] = batch.shape() else {
        return Err(Error::invalid(format!("expected [N, 1, H, W], got {:?}", batch.shape())));
    };
    if q.len() != n {
        return Err(Error::invalid(format!("{n} images but {} quality scores", q.len())));
    }
    if let Some(bad) = q.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::invalid(format!("quality score {bad} outside [0, 1]")));
    }
    let plane: Vec<T> = q.iter().flat_map(|&v| std::iter::repeat_n(T::cast(v), h * w)).collect();
    Tensor::concat_channels(&[batch.clone(), Tensor::new(&[n, 1, h, w], plane)?])
}

/// Uniform `[−1, 1]` latent batch.
pub fn sample_latent<T: Real>(n: usize, dim: usize, rng: &mut impl Rng) -> Tensor<T> {
    let data = (0..n * dim).map(|_| T::cast(rng.random_range(-1.0..=1.0))).collect();
    Tensor::new(&[n, dim], data).expect("shape matches")
}

/// `n` images from the generator in inference mode (running batchnorm
/// statistics), deterministic in `seed`.
pub fn generate<T: Real>(gen: &mut Generator<T>, n: usize, seed: u64) -> Result<Vec<GrayImage>> {
    if n == 0 {
        return Err(Error::invalid("generate needs n >= 1"));
    }
    const CHUNK: usize = 64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = gen.config().latent_dim;
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let m = CHUNK.min(n - out.len());
        let z = sample_latent::<T>(m, dim, &mut rng);
        out.extend(to_images(&gen.forward(&z, BatchNormMode::Eval)?)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests;
