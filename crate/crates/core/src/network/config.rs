use std::fmt;
use std::str::FromStr;

use crate::error::{invalid, Error, Result};

/// Network family: without (`Ep`) or with (`Epn`) the non-local operator.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Variant {
    Ep,
    Epn,
}

impl Variant {
    pub fn uses_nonlocal(self) -> bool {
        matches!(self, Variant::Epn)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Ep => "ep",
            Variant::Epn => "epn",
        })
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ep" => Ok(Variant::Ep),
            "epn" => Ok(Variant::Epn),
            other => invalid(format!("unknown variant `{other}` (ep|epn)")),
        }
    }
}

/// Architecture of an unrolled network.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ModelConfig {
    pub variant: Variant,
    pub phases: usize,
    pub nf: usize,
    pub height: usize,
    pub width: usize,
}

impl ModelConfig {
    pub fn new(variant: Variant, phases: usize, nf: usize, height: usize, width: usize) -> Result<Self> {
        let cfg = Self {
            variant,
            phases,
            nf,
            height,
            width,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.nf == 0 {
            return invalid("channel count must be positive");
        }
        if self.variant == Variant::Epn && !self.nf.is_multiple_of(2) {
            return invalid(format!(
                "non-local variant needs an even channel count, got {}",
                self.nf
            ));
        }
        if self.height == 0 || self.width == 0 {
            return invalid("patch size must be positive");
        }
        Ok(())
    }

    pub fn pixels(&self) -> usize {
        self.height * self.width
    }

    /// Short fingerprint used in diagnostics.
    pub fn fingerprint(&self) -> String {
        format!(
            "variant={} phases={} nf={} patch={}x{}",
            self.variant, self.phases, self.nf, self.height, self.width
        )
    }
}

/// Learnable scalars in one phase.
///
/// Local transforms: `nf·9·(1 + 2nf)` for each of the forward and backward
/// transforms, plus `γ`, `α`, `β` and `nf` thresholds. The non-local operator
/// adds two `nf/2`-filter embeddings, the `nf × nf` representation map and
/// the `nf × 2nf` combination map.
pub fn params_per_phase(variant: Variant, nf: usize) -> usize {
    let local = nf * 9 * (1 + 2 * nf) * 2 + 1 + 2 + nf;
    match variant {
        Variant::Ep => local,
        Variant::Epn => local + nf * (nf / 2) * 2 + nf * nf + 2 * nf * nf,
    }
}

/// Total learnable scalars. Phases do not share parameters.
pub fn count_params(config: &ModelConfig) -> usize {
    config.phases * params_per_phase(config.variant, config.nf)
}
