use crate::error::{Error, Result};

/// Supported square output extents.
pub const IMAGE_SIZES: [usize; 3] = [32, 64, 128];

/// Hyper-parameters of the generator, discriminator and training loop.
#[derive(Debug, Clone, PartialEq)]
pub struct GanConfig {
    pub image_size: usize,
    pub latent_dim: usize,
    /// Channel width `b`: the generator runs 8b→4b→2b→b→1, the
    /// discriminator 2→b→2b→4b→8b.
    pub base_channels: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub steps: usize,
    pub seed: u64,
    /// Drop generated images in the first quality quartile before they
    /// reach either update.
    pub quality_gate: bool,
    /// Drop real pool images in the first quality quartile once, up front.
    pub gate_real_pool: bool,
    /// Feed Q as the second discriminator channel; when off that channel
    /// is all zeros.
    pub condition_discriminator: bool,
    /// Fresh fake batches drawn when the gate keeps nothing.
    pub gate_retries: usize,
}

impl Default for GanConfig {
    fn default() -> Self {
        Self {
            image_size: 32,
            latent_dim: 100,
            base_channels: 64,
            batch_size: 64,
            learning_rate: 2e-4,
            steps: 2000,
            seed: 0,
            quality_gate: true,
            gate_real_pool: true,
            condition_discriminator: true,
            gate_retries: 3,
        }
    }
}

impl GanConfig {
    pub fn validate(&self) -> Result<()> {
        if !IMAGE_SIZES.contains(&self.image_size) {
            return Err(Error::invalid(format!(
                "image_size {} unsupported, expected one of {IMAGE_SIZES:?}",
                self.image_size
            )));
        }
        if self.latent_dim == 0 || self.base_channels == 0 {
            return Err(Error::invalid("latent_dim and base_channels must be >= 1"));
        }
        if self.batch_size < 2 {
            return Err(Error::invalid("batch_size must be >= 2 for batch normalization"));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::invalid(format!("learning_rate {} must be positive", self.learning_rate)));
        }
        Ok(())
    }

    /// Spatial extent the generator's projection is reshaped to.
    pub fn base_extent(&self) -> usize {
        self.image_size / 16
    }

    /// Key/value echo stored alongside checkpoints.
    pub fn to_pairs(&self) -> Vec<(String, String)> {
        [
            ("image_size", self.image_size.to_string()),
            ("latent_dim", self.latent_dim.to_string()),
            ("base_channels", self.base_channels.to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("learning_rate", format!("{:e}", self.learning_rate)),
            ("steps", self.steps.to_string()),
            ("seed", self.seed.to_string()),
            ("quality_gate", self.quality_gate.to_string()),
            ("gate_real_pool", self.gate_real_pool.to_string()),
            ("condition_discriminator", self.condition_discriminator.to_string()),
            ("gate_retries", self.gate_retries.to_string()),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect()
    }

    /// Overrides fields from key/value text; unknown keys are rejected.
    pub fn apply_pairs<'a>(&mut self, pairs: impl IntoIterator<Item = (&'a str, &'a str)>) -> Result<()> {
        fn parse<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
            v.parse()
                .map_err(|_| Error::invalid(format!("bad value `{v}` for `{key}`")))
        }
        for (k, v) in pairs {
            match k {
                "image_size" => self.image_size = parse(k, v)?,
                "latent_dim" => self.latent_dim = parse(k, v)?,
                "base_channels" => self.base_channels = parse(k, v)?,
                "batch_size" => self.batch_size = parse(k, v)?,
                "learning_rate" => self.learning_rate = parse(k, v)?,
                "steps" => self.steps = parse(k, v)?,
                "seed" => self.seed = parse(k, v)?,
                "quality_gate" => self.quality_gate = parse(k, v)?,
                "gate_real_pool" => self.gate_real_pool = parse(k, v)?,
                "condition_discriminator" => self.condition_discriminator = parse(k, v)?,
                "gate_retries" => self.gate_retries = parse(k, v)?,
                other => return Err(Error::invalid(format!("unknown gan config key `{other}`"))),
            }
        }
        Ok(())
    }
}
