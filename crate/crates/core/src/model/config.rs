use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rope::DEFAULT_ROPE_BASE;

/// Dimensions and seed of a toy decoder.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub n_layers: usize,
    pub n_heads: usize,
    pub head_dim: usize,
    pub hidden_dim: usize,
    pub mlp_dim: usize,
    pub vocab_size: usize,
    pub rope_base: f64,
    pub norm_eps: f64,
    pub seed: u64,
}

impl Default for ModelConfig {
    /// The desk-scale configuration: 4 layers, 4 heads of width 16.
    fn default() -> Self {
        Self {
            n_layers: 4,
            n_heads: 4,
            head_dim: 16,
            hidden_dim: 64,
            mlp_dim: 256,
            vocab_size: 512,
            rope_base: DEFAULT_ROPE_BASE,
            norm_eps: 1e-5,
            seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("n_layers", self.n_layers),
            ("n_heads", self.n_heads),
            ("head_dim", self.head_dim),
            ("hidden_dim", self.hidden_dim),
            ("mlp_dim", self.mlp_dim),
            ("vocab_size", self.vocab_size),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be at least 1")));
            }
        }
        if !self.head_dim.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "head_dim must be even, got {}",
                self.head_dim
            )));
        }
        if self.hidden_dim != self.n_heads * self.head_dim {
            return Err(Error::Config(format!(
                "hidden_dim ({}) must equal n_heads × head_dim ({} × {})",
                self.hidden_dim, self.n_heads, self.head_dim
            )));
        }
        if !(self.rope_base.is_finite() && self.rope_base > 1.0) {
            return Err(Error::Config(format!(
                "rope_base must exceed 1, got {}",
                self.rope_base
            )));
        }
        if !(self.norm_eps.is_finite() && self.norm_eps >= 0.0) {
            return Err(Error::Config(
                "norm_eps must be finite and non-negative".into(),
            ));
        }
        Ok(())
    }
}
