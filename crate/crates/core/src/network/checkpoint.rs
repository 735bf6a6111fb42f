//! Checkpoint files: container kind `checkpoint`, header fields `variant`,
//! `phases`, `nf`, `height`, `width`, `seed`, values in [`ModelParams::flatten`]
//! order.

use std::path::Path;

use super::config::{count_params, ModelConfig, Variant};
use super::params::ModelParams;
use crate::error::{Error, Result};
use crate::pipeline::Container;

pub const CHECKPOINT_KIND: &str = "checkpoint";

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub params: ModelParams,
    pub seed: u64,
}

impl Checkpoint {
    pub fn to_container(&self) -> Container {
        let c = &self.params.config;
        Container::new(CHECKPOINT_KIND, self.params.flatten())
            .with("variant", c.variant)
            .with("phases", c.phases)
            .with("nf", c.nf)
            .with("height", c.height)
            .with("width", c.width)
            .with("seed", self.seed)
    }

    pub fn from_container(c: &Container, origin: &Path) -> Result<Self> {
        let variant: Variant = c.parse("variant", origin)?;
        let config = ModelConfig::new(
            variant,
            c.parse("phases", origin)?,
            c.parse("nf", origin)?,
            c.parse("height", origin)?,
            c.parse("width", origin)?,
        )?;
        let expected = count_params(&config);
        if c.values.len() != expected {
            return Err(Error::Format {
                path: origin.to_path_buf(),
                reason: format!(
                    "{} has {expected} parameters but the file holds {}",
                    config.fingerprint(),
                    c.values.len()
                ),
            });
        }
        Ok(Self {
            params: ModelParams::from_flat(config, &c.values)?,
            seed: c.parse("seed", origin)?,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_container().write(path)
    }

    /// Reads and fully validates a checkpoint.
    pub fn load(path: &Path) -> Result<Self> {
        let c = Container::read_kind(path, CHECKPOINT_KIND)?;
        Self::from_container(&c, path)
    }

    /// Loads and requires the stored architecture to equal `expected`.
    pub fn load_expecting(path: &Path, expected: &ModelConfig) -> Result<Self> {
        let ck = Self::load(path)?;
        ck.check_config(expected)?;
        Ok(ck)
    }

    pub fn check_config(&self, expected: &ModelConfig) -> Result<()> {
        if &self.params.config != expected {
            return Err(Error::ConfigMismatch {
                expected: expected.fingerprint(),
                found: self.params.config.fingerprint(),
            });
        }
        Ok(())
    }
}
