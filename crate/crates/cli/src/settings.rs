//! Run configuration: flat `key = value` files, flag overrides and the
//! canonical hash echoed into every output.

use std::collections::BTreeMap;
use std::path::Path;

use idcgan::gan::GanConfig;
use idcgan::pad::PadConfig;
use sha2::{Digest, Sha256};

use crate::InputError;

/// Keys accepted in a config file or via `--set`.
pub const KEYS: &[&str] = &[
    // gan
    "image_size",
    "latent_dim",
    "base_channels",
    "batch_size",
    "learning_rate",
    "steps",
    "quality_gate",
    "gate_real_pool",
    "condition_discriminator",
    "gate_retries",
    // synth-data / generate
    "n",
    "identities",
    "attacks",
    "format",
    // quality / chi2
    "focus_half_power",
    "bins",
    "svg",
    // pad
    "folds",
    "pad_epochs",
    "pad_hidden",
    "pad_learning_rate",
    "pad_batch_size",
    "pad_leaky_slope",
    // everything
    "seed",
];

const GAN_KEYS: &[&str] = &[
    "image_size",
    "latent_dim",
    "base_channels",
    "batch_size",
    "learning_rate",
    "steps",
    "quality_gate",
    "gate_real_pool",
    "condition_discriminator",
    "gate_retries",
];

#[derive(Debug, Clone, Default)]
pub struct RunConfig {
    pub subcommand: String,
    values: BTreeMap<String, String>,
    /// Input paths as given; part of the hash, not of the key space.
    inputs: Vec<(String, String)>,
}

fn check_key(key: &str) -> Result<(), InputError> {
    if KEYS.contains(&key) {
        Ok(())
    } else {
        Err(InputError(format!("unknown config key `{key}`")))
    }
}

impl RunConfig {
    pub fn new(subcommand: &str) -> Self {
        Self { subcommand: subcommand.into(), ..Self::default() }
    }

    /// Reads `key = value` lines; `#` starts a comment line.
    pub fn load_file(&mut self, path: &Path) -> Result<(), InputError> {
        let text = std::fs::read_to_string(path).map_err(|e| InputError(format!("{}: {e}", path.display())))?;
        for (no, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| InputError(format!("{}:{}: expected `key = value`", path.display(), no + 1)))?;
            self.set(k.trim(), v.trim())?;
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), InputError> {
        check_key(key)?;
        self.values.insert(key.into(), value.into());
        Ok(())
    }

    pub fn set_opt(&mut self, key: &str, value: Option<impl ToString>) -> Result<(), InputError> {
        match value {
            Some(v) => self.set(key, &v.to_string()),
            None => Ok(()),
        }
    }

    /// `KEY=VALUE` from the command line.
    pub fn set_assignment(&mut self, text: &str) -> Result<(), InputError> {
        let (k, v) = text
            .split_once('=')
            .ok_or_else(|| InputError(format!("override `{text}` is not KEY=VALUE")))?;
        self.set(k.trim(), v.trim())
    }

    pub fn input(&mut self, name: &str, path: &Path) {
        self.inputs.push((name.into(), path.display().to_string()));
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    pub fn parse_or<T: std::str::FromStr>(&self, key: &str, default: T) -> Result<T, InputError> {
        match self.get(key) {
            None => Ok(default),
            Some(v) => v.parse().map_err(|_| InputError(format!("bad value `{v}` for `{key}`"))),
        }
    }

    pub fn seed(&self) -> Result<u64, InputError> {
        self.parse_or("seed", 0)
    }

    /// Canonical text: subcommand, inputs, then every set key in order.
    pub fn canonical(&self) -> String {
        let mut out = format!("subcommand={}\n", self.subcommand);
        for (k, v) in &self.inputs {
            out.push_str(&format!("input.{k}={v}\n"));
        }
        for (k, v) in &self.values {
            out.push_str(&format!("{k}={v}\n"));
        }
        out
    }

    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical().as_bytes()))
    }

    pub fn entries(&self) -> impl Iterator<Item = (&str, &str)> {
        self.values.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    pub fn gan(&self) -> Result<GanConfig, InputError> {
        let mut cfg = GanConfig { seed: self.seed()?, ..GanConfig::default() };
        let pairs = self.entries().filter(|(k, _)| GAN_KEYS.contains(k));
        cfg.apply_pairs(pairs).map_err(|e| InputError(e.to_string()))?;
        cfg.validate().map_err(|e| InputError(e.to_string()))?;
        Ok(cfg)
    }

    pub fn pad(&self) -> Result<PadConfig, InputError> {
        let d = PadConfig::default();
        let cfg = PadConfig {
            folds: self.parse_or("folds", d.folds)?,
            seed: self.seed()?,
            epochs: self.parse_or("pad_epochs", d.epochs)?,
            hidden: self.parse_or("pad_hidden", d.hidden)?,
            learning_rate: self.parse_or("pad_learning_rate", d.learning_rate)?,
            batch_size: self.parse_or("pad_batch_size", d.batch_size)?,
            leaky_slope: self.parse_or("pad_leaky_slope", d.leaky_slope)?,
        };
        cfg.validate().map_err(|e| InputError(e.to_string()))?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_values_and_overrides() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.cfg");
        std::fs::write(&path, "# comment\nsteps = 10\n\nbatch_size=8\n").unwrap();
        let mut cfg = RunConfig::new("train");
        cfg.load_file(&path).unwrap();
        cfg.set_assignment("steps=20").unwrap();
        let gan = cfg.gan().unwrap();
        assert_eq!((gan.steps, gan.batch_size), (20, 8));
        assert!(cfg.set("bogus", "1").unwrap_err().0.contains("bogus"));
    }

    #[test]
    fn hash_tracks_values() {
        let mut a = RunConfig::new("quality");
        let h0 = a.hash();
        a.set("bins", "20").unwrap();
        assert_ne!(a.hash(), h0);
        let mut b = RunConfig::new("quality");
        b.set("bins", "20").unwrap();
        assert_eq!(a.hash(), b.hash());
    }
}
