use std::fmt;
use std::str::FromStr;

use super::EncoderError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Variant {
    Base,
    Latent,
    Universal,
    LatentUniversal,
}

impl Variant {
    pub const ALL: [Variant; 4] = [
        Variant::Base,
        Variant::Latent,
        Variant::Universal,
        Variant::LatentUniversal,
    ];

    pub fn is_latent(self) -> bool {
        matches!(self, Variant::Latent | Variant::LatentUniversal)
    }

    pub fn is_universal(self) -> bool {
        matches!(self, Variant::Universal | Variant::LatentUniversal)
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::Base => "base",
            Variant::Latent => "latent",
            Variant::Universal => "universal",
            Variant::LatentUniversal => "latent-universal",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = EncoderError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| EncoderError::InvalidConfig(format!("unknown variant {s:?}")))
    }
}

/// Blocks in the shared recurring unit of the universal variants.
pub const UNIT_BLOCKS: usize = 3;

/// Architecture and ACT settings.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub hidden: usize,
    pub heads: usize,
    pub ffn: usize,
    pub layers_base: usize,
    pub vocab: usize,
    pub max_positions: usize,
    /// Latent categories `L`; only used by the latent variants.
    pub latent_dims: usize,
    pub variant: Variant,
    pub act_epsilon: f64,
    pub act_max_steps: usize,
    pub act_tau: f64,
    /// Initial value of the halting unit's bias.
    pub act_bias_init: f64,
}

impl ModelConfig {
    /// Widths of the published models.
    pub fn paper(variant: Variant) -> Self {
        Self {
            hidden: 768,
            heads: 12,
            ffn: 3072,
            layers_base: 12,
            vocab: 31_346,
            max_positions: 512,
            latent_dims: 8,
            variant,
            act_epsilon: 0.01,
            act_max_steps: 8,
            act_tau: 0.01,
            act_bias_init: 1.0,
        }
    }

    /// Small widths that train in minutes on a CPU.
    pub fn desk(variant: Variant, vocab: usize) -> Self {
        Self {
            hidden: 64,
            heads: 2,
            ffn: 128,
            layers_base: 3,
            vocab,
            max_positions: 96,
            latent_dims: 2,
            ..Self::paper(variant)
        }
    }

    /// `L` when the variant uses the latent bias, otherwise 0.
    pub fn latent(&self) -> usize {
        if self.variant.is_latent() {
            self.latent_dims
        } else {
            0
        }
    }

    pub fn head_width(&self) -> usize {
        self.hidden / self.heads
    }

    pub fn validate(&self) -> Result<(), EncoderError> {
        let bad = |m: String| Err(EncoderError::InvalidConfig(m));
        if self.hidden == 0 || self.heads == 0 || self.ffn == 0 {
            return bad("hidden, heads and ffn must be positive".into());
        }
        if self.hidden % self.heads != 0 {
            return bad(format!(
                "hidden {} is not divisible by heads {}",
                self.hidden, self.heads
            ));
        }
        if self.vocab == 0 || self.max_positions == 0 {
            return bad("vocab and max_positions must be positive".into());
        }
        if self.variant.is_latent() && self.latent_dims == 0 {
            return bad(format!("variant {} needs latent_dims >= 1", self.variant));
        }
        if !(self.act_epsilon > 0.0 && self.act_epsilon < 0.5) {
            return bad(format!("act_epsilon {} outside (0, 0.5)", self.act_epsilon));
        }
        if self.act_max_steps == 0 {
            return bad("act_max_steps must be at least 1".into());
        }
        if !(self.act_tau >= 0.0 && self.act_tau.is_finite()) {
            return bad(format!("act_tau {} must be >= 0", self.act_tau));
        }
        if !self.act_bias_init.is_finite() {
            return bad("act_bias_init must be finite".into());
        }
        Ok(())
    }
}
