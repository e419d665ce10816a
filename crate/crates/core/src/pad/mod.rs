//! Presentation attack detection: Zernike + LBPV features, a one-hidden-
//! layer perceptron, and identity-disjoint k-fold cross validation.

mod features;

pub use features::{
    features, gauss_legendre, lbpv, radial_polynomial, riu2, zernike, zernike_count, FEATURE_LEN, LBP_BINS,
    ZERNIKE_ORDER,
};

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::data::{Checkpoint, NamedTensor};
use crate::error::{Error, Result};
use crate::image::GrayImage;
use crate::quality::SegmentConfig;
use crate::roc::{Roc, RocPoint};
use crate::tensor::{dense, zero_grads, Adam, AdamConfig, Param, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub struct PadConfig {
    pub folds: usize,
    pub seed: u64,
    pub epochs: usize,
    pub hidden: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub leaky_slope: f64,
}

impl Default for PadConfig {
    fn default() -> Self {
        Self {
            folds: 5,
            seed: 0,
            epochs: 200,
            hidden: 32,
            learning_rate: 1e-3,
            batch_size: 32,
            leaky_slope: 0.01,
        }
    }
}

impl PadConfig {
    pub fn validate(&self) -> Result<()> {
        if self.folds < 2 {
            return Err(Error::invalid(format!("need at least 2 folds, got {}", self.folds)));
        }
        if self.epochs == 0 || self.hidden == 0 || self.batch_size == 0 {
            return Err(Error::invalid("epochs, hidden and batch_size must be positive"));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::invalid(format!("learning rate {} must be positive", self.learning_rate)));
        }
        Ok(())
    }
}

/// One labelled feature vector. `attack` is the positive class.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub features: Vec<f64>,
    pub attack: bool,
    pub identity: Option<u64>,
}

/// Fold index of every sample.
///
/// Samples sharing an identity always land in the same fold. Without
/// identities each class is shuffled and dealt round-robin; with them,
/// identity groups are shuffled and each goes to the fold whose class
/// proportions it disturbs least.
pub fn assign_folds(samples: &[Sample], folds: usize, seed: u64) -> Result<Vec<usize>> {
    if folds < 2 {
        return Err(Error::invalid(format!("need at least 2 folds, got {folds}")));
    }
    let n_attack = samples.iter().filter(|s| s.attack).count();
    let n_real = samples.len() - n_attack;
    if n_attack < folds || n_real < folds {
        return Err(Error::invalid(format!(
            "{n_real} real and {n_attack} attack samples; each class needs at least {folds}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fold = vec![0; samples.len()];
    if samples.iter().all(|s| s.identity.is_none()) {
        for class in [false, true] {
            let mut idx: Vec<usize> = (0..samples.len()).filter(|&i| samples[i].attack == class).collect();
            idx.shuffle(&mut rng);
            for (k, i) in idx.into_iter().enumerate() {
                fold[i] = k % folds;
            }
        }
        return Ok(fold);
    }
    // unlabelled samples form singleton groups
    let mut groups: BTreeMap<(u8, u64), Vec<usize>> = BTreeMap::new();
    for (i, s) in samples.iter().enumerate() {
        let key = match s.identity {
            Some(id) => (0, id),
            None => (1, i as u64),
        };
        groups.entry(key).or_default().push(i);
    }
    if groups.len() < folds {
        return Err(Error::invalid(format!("{} identity groups cannot fill {folds} folds", groups.len())));
    }
    let mut groups: Vec<Vec<usize>> = groups.into_values().collect();
    groups.shuffle(&mut rng);
    // larger groups first; the sort is stable so ties keep the shuffle
    groups.sort_by_key(|g| std::cmp::Reverse(g.len()));
    let mut load = vec![(0usize, 0usize); folds];
    for g in groups {
        let a = g.iter().filter(|&&i| samples[i].attack).count();
        let r = g.len() - a;
        let cost = |&(lr, la): &(usize, usize)| {
            (lr + r) as f64 / n_real as f64 + (la + a) as f64 / n_attack as f64
        };
        let f = (0..folds)
            .min_by(|&x, &y| cost(&load[x]).total_cmp(&cost(&load[y])))
            .expect("folds >= 2");
        load[f].0 += r;
        load[f].1 += a;
        for i in g {
            fold[i] = f;
        }
    }
    Ok(fold)
}

/// Trained detector: z-score standardization followed by
/// `dense → leaky ReLU → dense → sigmoid`. Parameters are `f32`.
#[derive(Debug, Clone, PartialEq)]
pub struct PadModel {
    pub mean: Vec<f32>,
    pub scale: Vec<f32>,
    /// `[hidden, inputs]`, row-major.
    pub w1: Vec<f32>,
    pub b1: Vec<f32>,
    pub w2: Vec<f32>,
    pub b2: f32,
    pub leaky_slope: f64,
    /// Free-form training metadata (fold, seed, epochs, ...).
    pub metadata: Vec<(String, String)>,
}

impl PadModel {
    pub fn inputs(&self) -> usize {
        self.mean.len()
    }

    pub fn hidden(&self) -> usize {
        self.b1.len()
    }

    fn standardize(&self, rows: &[&[f64]]) -> Result<Tensor<f32>> {
        let d = self.inputs();
        let mut data = Vec::with_capacity(rows.len() * d);
        for row in rows {
            if row.len() != d {
                return Err(Error::invalid(format!("feature vector has {} entries, model expects {d}", row.len())));
            }
            data.extend(row.iter().zip(self.mean.iter().zip(&self.scale)).map(|(&v, (&m, &s))| {
                ((v - m as f64) / s as f64) as f32
            }));
        }
        Tensor::new(&[rows.len(), d], data)
    }

    fn logits(&self, x: &Tensor<f32>, params: &[Param<f32>]) -> Result<Tensor<f32>> {
        let h = dense(x, &params[0].tensor, &params[1].tensor)?.leaky_relu(self.leaky_slope);
        dense(&h, &params[2].tensor, &params[3].tensor)
    }

    fn params(&self) -> Result<Vec<Param<f32>>> {
        let (d, h) = (self.inputs(), self.hidden());
        Ok(vec![
            Param::new("w1", Tensor::new(&[h, d], self.w1.clone())?),
            Param::new("b1", Tensor::new(&[h], self.b1.clone())?),
            Param::new("w2", Tensor::new(&[1, h], self.w2.clone())?),
            Param::new("b2", Tensor::new(&[1], vec![self.b2])?),
        ])
    }

    /// Attack probability of each feature vector.
    pub fn predict(&self, rows: &[&[f64]]) -> Result<Vec<f64>> {
        if rows.is_empty() {
            return Ok(Vec::new());
        }
        let params = self.params()?;
        let l = self.logits(&self.standardize(rows)?, &params)?;
        Ok(l.sigmoid().to_f64_vec())
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let t = |name: &str, shape: Vec<usize>, data: Vec<f32>| NamedTensor { name: name.into(), shape, data };
        let (d, h) = (self.inputs(), self.hidden());
        let mut config = vec![("kind".to_string(), "pad".to_string()), ("leaky_slope".into(), self.leaky_slope.to_string())];
        config.extend(self.metadata.iter().cloned());
        Checkpoint {
            config,
            tensors: vec![
                t("mean", vec![d], self.mean.clone()),
                t("scale", vec![d], self.scale.clone()),
                t("w1", vec![h, d], self.w1.clone()),
                t("b1", vec![h], self.b1.clone()),
                t("w2", vec![1, h], self.w2.clone()),
                t("b2", vec![1], vec![self.b2]),
            ],
        }
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        if ck.config_value("kind") != Some("pad") {
            return Err(Error::invalid("checkpoint does not hold a PAD model"));
        }
        let get = |name: &str| {
            ck.tensor(name)
                .map(|t| t.data.clone())
                .ok_or_else(|| Error::invalid(format!("PAD checkpoint lacks tensor `{name}`")))
        };
        let leaky_slope = ck
            .config_value("leaky_slope")
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| Error::invalid("PAD checkpoint lacks a valid leaky_slope"))?;
        let model = Self {
            mean: get("mean")?,
            scale: get("scale")?,
            w1: get("w1")?,
            b1: get("b1")?,
            w2: get("w2")?,
            b2: *get("b2")?.first().ok_or_else(|| Error::invalid("empty b2"))?,
            leaky_slope,
            metadata: ck.config.iter().filter(|(k, _)| k != "kind" && k != "leaky_slope").cloned().collect(),
        };
        let (d, h) = (model.inputs(), model.hidden());
        if model.scale.len() != d || model.w1.len() != h * d || model.w2.len() != h {
            return Err(Error::invalid("PAD checkpoint tensors have inconsistent extents"));
        }
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_checkpoint().save(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_checkpoint(&Checkpoint::load(path)?)
    }
}

/// Fits a detector on `samples` with binary cross-entropy on logits,
/// minibatch Adam (β₁ 0.9) and per-epoch shuffling.
pub fn fit(samples: &[Sample], cfg: &PadConfig, seed: u64) -> Result<PadModel> {
    cfg.validate()?;
    let first = samples.first().ok_or_else(|| Error::Empty("PAD training set".into()))?;
    let d = first.features.len();
    if let Some(bad) = samples.iter().find(|s| s.features.len() != d || s.features.iter().any(|v| !v.is_finite())) {
        return Err(Error::invalid(format!(
            "feature vectors must all have {d} finite entries, found {:?}",
            &bad.features
        )));
    }
    let n = samples.len() as f64;
    let mean: Vec<f64> = (0..d).map(|j| samples.iter().map(|s| s.features[j]).sum::<f64>() / n).collect();
    let scale: Vec<f64> = (0..d)
        .map(|j| {
            let var = samples.iter().map(|s| (s.features[j] - mean[j]).powi(2)).sum::<f64>() / n;
            if var.sqrt() > 1e-12 {
                var.sqrt()
            } else {
                1.0
            }
        })
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = cfg.hidden;
    let uniform = |rng: &mut ChaCha8Rng, fan_in: usize, k: usize| -> Vec<f32> {
        let bound = 1.0 / (fan_in as f64).sqrt();
        (0..k).map(|_| rng.random_range(-bound..bound) as f32).collect()
    };
    let mut model = PadModel {
        mean: mean.iter().map(|&v| v as f32).collect(),
        scale: scale.iter().map(|&v| v as f32).collect(),
        w1: uniform(&mut rng, d, h * d),
        b1: uniform(&mut rng, d, h),
        w2: uniform(&mut rng, h, h),
        b2: uniform(&mut rng, h, 1)[0],
        leaky_slope: cfg.leaky_slope,
        metadata: vec![
            ("seed".into(), seed.to_string()),
            ("epochs".into(), cfg.epochs.to_string()),
            ("hidden".into(), h.to_string()),
        ],
    };
    let params = model.params()?;
    let mut opt = Adam::new(
        AdamConfig { learning_rate: cfg.learning_rate, beta1: 0.9, ..AdamConfig::default() },
        &params,
    );
    let rows: Vec<&[f64]> = samples.iter().map(|s| s.features.as_slice()).collect();
    let x_all = model.standardize(&rows)?;
    let y_all: Vec<f32> = samples.iter().map(|s| s.attack as u8 as f32).collect();
    let mut order: Vec<usize> = (0..samples.len()).collect();
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            zero_grads(&params);
            let x = x_all.gather_rows(batch)?;
            let y = Tensor::new(&[batch.len(), 1], batch.iter().map(|&i| y_all[i]).collect())?;
            let l = model.logits(&x, &params)?;
            // BCE on logits: softplus(l) − y·l
            let loss = l.softplus().sub(&l.mul(&y)?)?.mean()?;
            loss.backward()?;
            opt.step(&params)?;
        }
    }
    model.w1 = params[0].tensor.to_vec();
    model.b1 = params[1].tensor.to_vec();
    model.w2 = params[2].tensor.to_vec();
    model.b2 = params[3].tensor.to_vec()[0];
    Ok(model)
}

/// Detection metrics on held-out samples.
#[derive(Debug, Clone, PartialEq)]
pub struct FoldReport {
    pub fold: usize,
    pub train_size: usize,
    pub test_size: usize,
    /// Fraction correct at probability threshold 0.5.
    pub accuracy: f64,
    pub eer: f64,
}

#[derive(Debug, Clone)]
pub struct CrossValidation {
    pub folds: Vec<FoldReport>,
    pub models: Vec<PadModel>,
    /// Out-of-fold attack probability of every input sample.
    pub scores: Vec<f64>,
    pub fold_of: Vec<usize>,
    pub mean_accuracy: f64,
    pub mean_eer: f64,
    /// Pooled out-of-fold ROC; attacks are the positives.
    pub roc: Roc,
    pub pooled_eer: f64,
}

fn accuracy(probs: &[f64], attack: &[bool]) -> f64 {
    let correct = probs.iter().zip(attack).filter(|(&p, &a)| (p >= 0.5) == a).count();
    correct as f64 / probs.len() as f64
}

fn split_scores(probs: &[f64], attack: &[bool]) -> (Vec<f64>, Vec<f64>) {
    let pos = probs.iter().zip(attack).filter(|(_, &a)| a).map(|(&p, _)| p).collect();
    let neg = probs.iter().zip(attack).filter(|(_, &a)| !a).map(|(&p, _)| p).collect();
    (pos, neg)
}

/// k-fold cross validation on precomputed feature vectors. Fold `k` trains
/// with a seed drawn from the master seed, so folds are independent and
/// may run in parallel.
pub fn cross_validate(samples: &[Sample], cfg: &PadConfig) -> Result<CrossValidation> {
    cfg.validate()?;
    let fold_of = assign_folds(samples, cfg.folds, cfg.seed)?;
    let mut master = ChaCha8Rng::seed_from_u64(cfg.seed);
    let seeds: Vec<u64> = (0..cfg.folds).map(|_| master.random()).collect();
    let results: Vec<Result<(FoldReport, PadModel, Vec<(usize, f64)>)>> = (0..cfg.folds)
        .into_par_iter()
        .map(|k| {
            let train: Vec<Sample> = samples.iter().zip(&fold_of).filter(|(_, &f)| f != k).map(|(s, _)| s.clone()).collect();
            let test: Vec<usize> = (0..samples.len()).filter(|&i| fold_of[i] == k).collect();
            let mut model = fit(&train, cfg, seeds[k])?;
            model.metadata.push(("fold".into(), k.to_string()));
            model.metadata.push(("folds".into(), cfg.folds.to_string()));
            let rows: Vec<&[f64]> = test.iter().map(|&i| samples[i].features.as_slice()).collect();
            let probs = model.predict(&rows)?;
            let attack: Vec<bool> = test.iter().map(|&i| samples[i].attack).collect();
            let (pos, neg) = split_scores(&probs, &attack);
            let eer = crate::roc::eer(&pos, &neg)?;
            let report = FoldReport {
                fold: k,
                train_size: train.len(),
                test_size: test.len(),
                accuracy: accuracy(&probs, &attack),
                eer,
            };
            Ok((report, model, test.into_iter().zip(probs).collect()))
        })
        .collect();
    let mut folds = Vec::new();
    let mut models = Vec::new();
    let mut scores = vec![f64::NAN; samples.len()];
    for r in results {
        let (report, model, probs) = r?;
        folds.push(report);
        models.push(model);
        for (i, p) in probs {
            scores[i] = p;
        }
    }
    let attack: Vec<bool> = samples.iter().map(|s| s.attack).collect();
    let (pos, neg) = split_scores(&scores, &attack);
    let roc = Roc::new(&pos, &neg)?;
    let k = folds.len() as f64;
    Ok(CrossValidation {
        mean_accuracy: folds.iter().map(|f| f.accuracy).sum::<f64>() / k,
        mean_eer: folds.iter().map(|f| f.eer).sum::<f64>() / k,
        pooled_eer: roc.eer(),
        roc,
        folds,
        models,
        scores,
        fold_of,
    })
}

/// Feature extraction for a batch of images, in input order.
pub fn extract_all(images: &[GrayImage], cfg: &SegmentConfig) -> Vec<Vec<f64>> {
    images.par_iter().map(|img| features(img, cfg)).collect()
}

/// Extracts features from real and attack images and cross-validates.
/// `identities`, when given, lists real identities then attack identities.
pub fn train_pad(
    real: &[GrayImage],
    attack: &[GrayImage],
    identities: Option<&[u64]>,
    cfg: &PadConfig,
) -> Result<CrossValidation> {
    if real.is_empty() || attack.is_empty() {
        return Err(Error::Empty("PAD needs both real and attack images".into()));
    }
    if let Some(ids) = identities {
        if ids.len() != real.len() + attack.len() {
            return Err(Error::invalid(format!(
                "{} identities for {} images",
                ids.len(),
                real.len() + attack.len()
            )));
        }
    }
    let seg = SegmentConfig::default();
    let feats = extract_all(&[real, attack].concat(), &seg);
    let samples: Vec<Sample> = feats
        .into_iter()
        .enumerate()
        .map(|(i, features)| Sample {
            features,
            attack: i >= real.len(),
            identity: identities.map(|ids| ids[i]),
        })
        .collect();
    cross_validate(&samples, cfg)
}

/// Accuracy, EER and ROC of a trained model on labelled samples.
pub fn evaluate(model: &PadModel, samples: &[Sample]) -> Result<(f64, f64, Vec<RocPoint>)> {
    let rows: Vec<&[f64]> = samples.iter().map(|s| s.features.as_slice()).collect();
    let probs = model.predict(&rows)?;
    let attack: Vec<bool> = samples.iter().map(|s| s.attack).collect();
    let (pos, neg) = split_scores(&probs, &attack);
    let roc = Roc::new(&pos, &neg)?;
    Ok((accuracy(&probs, &attack), roc.eer(), roc.points))
}

#[cfg(test)]
mod tests;
