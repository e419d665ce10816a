//! Alternating discriminator/generator updates with quality gating.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::config::GanConfig;
use super::model::{Discriminator, Generator};
use super::{attach_quality, d_loss_logits, g_loss_logits, image_batch, quartile_gate_indices, sample_latent, to_images};
use crate::error::{Error, Result};
use crate::image::GrayImage;
use crate::tensor::{zero_grads, Adam, AdamConfig, BatchNormMode, Tensor};

/// One training step's record.
#[derive(Debug, Clone, PartialEq)]
pub struct StepLog {
    pub step: usize,
    pub d_loss: f64,
    pub g_loss: f64,
    pub mean_q_real: f64,
    /// Mean quality of the fake batch before gating.
    pub mean_q_fake: f64,
    /// Fakes removed by the gate.
    pub discarded: usize,
    /// The gate kept fewer than two fakes after every retry, so the step
    /// used the whole batch.
    pub ungated: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainLog {
    pub steps: Vec<StepLog>,
    /// Real pool size before and after the one-off quality gate.
    pub real_pool_total: usize,
    pub real_pool_kept: usize,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub generator: Generator<f32>,
    pub discriminator: Discriminator<f32>,
    pub log: TrainLog,
}

/// Stateful training loop; [`train`] runs it for `cfg.steps` steps.
pub struct Trainer<Q> {
    cfg: GanConfig,
    quality: Q,
    generator: Generator<f32>,
    discriminator: Discriminator<f32>,
    opt_g: Adam,
    opt_d: Adam,
    pool: Vec<GrayImage>,
    pool_q: Vec<f64>,
    rng: ChaCha8Rng,
    /// Retries draw from their own stream so that gating never shifts the
    /// latents of later steps.
    retry_rng: ChaCha8Rng,
    log: TrainLog,
}

/// Inputs of one training step.
#[derive(Debug, Clone)]
pub struct PreparedBatch {
    pub real_imgs: Vec<GrayImage>,
    pub real_q: Vec<f64>,
    /// Generator output `[B, 1, S, S]`, still attached to its graph.
    pub fake: Tensor<f32>,
    pub fake_q: Vec<f64>,
    /// Indices of `fake` that passed the gate.
    pub kept: Vec<usize>,
    pub ungated: bool,
}

impl PreparedBatch {
    fn kept_q(&self) -> Vec<f64> {
        self.kept.iter().map(|&i| self.fake_q[i]).collect()
    }
}

fn finite(name: &str, v: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFiniteGradient(format!("{name} = {v}")))
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len().max(1) as f64
}

impl<Q> Trainer<Q>
where
    Q: Fn(&GrayImage) -> f64 + Sync,
{
    pub fn new(cfg: &GanConfig, real_pool: &[GrayImage], quality: Q) -> Result<Self> {
        cfg.validate()?;
        let s = cfg.image_size;
        if let Some(bad) = real_pool.iter().find(|img| (img.width(), img.height()) != (s, s)) {
            return Err(Error::invalid(format!(
                "real image is {}×{}, training expects {s}×{s}",
                bad.width(),
                bad.height()
            )));
        }
        if real_pool.is_empty() {
            return Err(Error::Empty("real training pool".into()));
        }
        let scores: Vec<f64> = real_pool.par_iter().map(&quality).collect();
        let keep: Vec<usize> = if cfg.gate_real_pool {
            quartile_gate_indices(&scores)?
        } else {
            (0..real_pool.len()).collect()
        };
        if keep.is_empty() {
            return Err(Error::Empty("real pool after quality gating".into()));
        }
        let pool: Vec<GrayImage> = keep.iter().map(|&i| real_pool[i].clone()).collect();
        let pool_q: Vec<f64> = keep.iter().map(|&i| scores[i]).collect();

        let mut init = ChaCha8Rng::seed_from_u64(cfg.seed);
        let generator = Generator::new(cfg, &mut init)?;
        let discriminator = Discriminator::new(cfg, &mut init)?;
        let adam = AdamConfig { learning_rate: cfg.learning_rate, ..AdamConfig::default() };
        Ok(Self {
            cfg: cfg.clone(),
            opt_g: Adam::new(adam, generator.params()),
            opt_d: Adam::new(adam, discriminator.params()),
            generator,
            discriminator,
            quality,
            rng: ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_0001),
            retry_rng: ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_0002),
            log: TrainLog {
                steps: Vec::new(),
                real_pool_total: real_pool.len(),
                real_pool_kept: pool.len(),
            },
            pool,
            pool_q,
        })
    }

    pub fn generator(&self) -> &Generator<f32> {
        &self.generator
    }

    pub fn generator_mut(&mut self) -> &mut Generator<f32> {
        &mut self.generator
    }

    pub fn discriminator(&self) -> &Discriminator<f32> {
        &self.discriminator
    }

    pub fn log(&self) -> &TrainLog {
        &self.log
    }

    fn score(&self, batch: &Tensor<f32>) -> Result<Vec<f64>> {
        let images = to_images(batch)?;
        Ok(images.par_iter().map(&self.quality).map(|q| q.clamp(0.0, 1.0)).collect())
    }

    fn plane(&self, q: &[f64]) -> Vec<f64> {
        if self.cfg.condition_discriminator {
            q.to_vec()
        } else {
            vec![0.0; q.len()]
        }
    }

    /// Draws a real batch and a (possibly gated) fake batch.
    pub fn prepare_batch(&mut self) -> Result<PreparedBatch> {
        let b = self.cfg.batch_size;
        let dim = self.cfg.latent_dim;
        let real_idx: Vec<usize> = (0..b).map(|_| self.rng.random_range(0..self.pool.len())).collect();
        let real_imgs: Vec<GrayImage> = real_idx.iter().map(|&i| self.pool[i].clone()).collect();
        let real_q: Vec<f64> = real_idx.iter().map(|&i| self.pool_q[i]).collect();

        let z = sample_latent::<f32>(b, dim, &mut self.rng);
        let mut fake = self.generator.forward(&z, BatchNormMode::Train)?;
        let mut fake_q = self.score(&fake)?;
        let mut kept: Vec<usize> = (0..b).collect();
        let mut ungated = false;
        if self.cfg.quality_gate {
            let mut idx = quartile_gate_indices(&fake_q)?;
            let mut candidate = (fake.clone(), fake_q.clone());
            let mut tries = 0;
            // fewer than two survivors cannot be batch-normalized
            while idx.len() < 2 && tries < self.cfg.gate_retries {
                tries += 1;
                let z = sample_latent::<f32>(b, dim, &mut self.retry_rng);
                let batch = self.generator.forward(&z, BatchNormMode::Train)?;
                let q = self.score(&batch)?;
                idx = quartile_gate_indices(&q)?;
                candidate = (batch, q);
            }
            if idx.len() < 2 {
                ungated = true;
            } else {
                (fake, fake_q) = candidate;
                kept = idx;
            }
        }
        Ok(PreparedBatch { real_imgs, real_q, fake, fake_q, kept, ungated })
    }

    /// Discriminator update on the real batch and the detached kept fakes.
    pub fn update_discriminator(&mut self, batch: &PreparedBatch) -> Result<f64> {
        let kept_q = batch.kept_q();
        zero_grads(self.discriminator.params());
        let real_x = attach_quality(&image_batch::<f32>(&batch.real_imgs)?, &self.plane(&batch.real_q))?;
        let fake_x = attach_quality(&batch.fake.detach().gather_rows(&batch.kept)?, &self.plane(&kept_q))?;
        let real_logits = self.discriminator.forward(&real_x, BatchNormMode::Train)?;
        let fake_logits = self.discriminator.forward(&fake_x, BatchNormMode::Train)?;
        let loss = d_loss_logits(&real_logits, &fake_logits)?;
        loss.backward()?;
        self.opt_d.step(self.discriminator.params())?;
        finite("d_loss", loss.item()?.into())
    }

    /// Generator update through the frozen discriminator on the kept fakes.
    pub fn update_generator(&mut self, batch: &PreparedBatch) -> Result<f64> {
        let kept_q = batch.kept_q();
        zero_grads(self.generator.params());
        self.discriminator.set_trainable(false);
        let result = (|| {
            let x = attach_quality(&batch.fake.gather_rows(&batch.kept)?, &self.plane(&kept_q))?;
            let logits = self.discriminator.forward(&x, BatchNormMode::Train)?;
            let loss = g_loss_logits(&logits)?;
            loss.backward()?;
            Ok::<_, Error>(loss)
        })();
        self.discriminator.set_trainable(true);
        let loss = result?;
        self.opt_g.step(self.generator.params())?;
        finite("g_loss", loss.item()?.into())
    }

    /// One discriminator update followed by one generator update.
    pub fn step(&mut self) -> Result<StepLog> {
        let batch = self.prepare_batch()?;
        let d_loss = self.update_discriminator(&batch)?;
        let g_loss = self.update_generator(&batch)?;
        let entry = StepLog {
            step: self.log.steps.len(),
            d_loss,
            g_loss,
            mean_q_real: mean(&batch.real_q),
            mean_q_fake: mean(&batch.fake_q),
            discarded: batch.fake_q.len() - batch.kept.len(),
            ungated: batch.ungated,
        };
        self.log.steps.push(entry.clone());
        Ok(entry)
    }

    pub fn finish(self) -> TrainOutcome {
        TrainOutcome {
            generator: self.generator,
            discriminator: self.discriminator,
            log: self.log,
        }
    }
}

/// Trains for `cfg.steps` steps on `real_pool`, scoring images with
/// `quality`.
pub fn train<Q>(cfg: &GanConfig, real_pool: &[GrayImage], quality: Q) -> Result<TrainOutcome>
where
    Q: Fn(&GrayImage) -> f64 + Sync,
{
    let mut trainer = Trainer::new(cfg, real_pool, quality)?;
    for _ in 0..cfg.steps {
        trainer.step()?;
    }
    Ok(trainer.finish())
}
