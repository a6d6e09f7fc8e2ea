use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Shape of the decoder.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub vocab_size: usize,
    /// Maximum number of tokens (BOS included) in a scored sequence.
    pub context_len: usize,
    pub embed_dim: usize,
    pub num_layers: usize,
    pub num_heads: usize,
    pub feedforward_dim: usize,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            vocab_size: 259,
            context_len: 128,
            embed_dim: 48,
            num_layers: 2,
            num_heads: 4,
            feedforward_dim: 192,
            seed: 42,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("vocab_size", self.vocab_size),
            ("context_len", self.context_len),
            ("embed_dim", self.embed_dim),
            ("num_layers", self.num_layers),
            ("num_heads", self.num_heads),
            ("feedforward_dim", self.feedforward_dim),
        ];
        for (name, v) in dims {
            if v == 0 {
                return Err(Error::config(format!("{name} must be positive")));
            }
        }
        if self.context_len < 2 {
            return Err(Error::config("context_len must be at least 2"));
        }
        if !self.embed_dim.is_multiple_of(self.num_heads) {
            return Err(Error::config(format!(
                "embed_dim {} is not divisible by num_heads {}",
                self.embed_dim, self.num_heads
            )));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.embed_dim / self.num_heads
    }
}

/// Optimisation settings shared by pretraining and fine-tuning.
///
/// The learning rate follows a cosine decay from `learning_rate` to zero
/// over all steps; updates use Adam with global-norm gradient clipping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub clip_norm: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 3,
            batch_size: 8,
            learning_rate: 1e-3,
            seed: 42,
            clip_norm: 1.0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::config("epochs must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size must be at least 1"));
        }
        if !self.learning_rate.is_finite() || self.learning_rate < 0.0 {
            return Err(Error::config("learning_rate must be finite and non-negative"));
        }
        if self.clip_norm.is_nan() || self.clip_norm <= 0.0 {
            return Err(Error::config("clip_norm must be positive"));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::config("Adam betas must lie in [0, 1)"));
        }
        if self.eps.is_nan() || self.eps <= 0.0 {
            return Err(Error::config("eps must be positive"));
        }
        Ok(())
    }
}

/// Attention projection a low-rank adapter can be attached to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AdapterTarget {
    Query,
    Key,
    Value,
    Output,
}

impl AdapterTarget {
    pub const ALL: [AdapterTarget; 4] =
        [AdapterTarget::Query, AdapterTarget::Key, AdapterTarget::Value, AdapterTarget::Output];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            AdapterTarget::Query => "q",
            AdapterTarget::Key => "k",
            AdapterTarget::Value => "v",
            AdapterTarget::Output => "o",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdapterConfig {
    pub rank: usize,
    pub alpha: f64,
    pub targets: Vec<AdapterTarget>,
    /// Standard deviation of the Gaussian init of the down-projection.
    pub init_std: f64,
}

impl Default for AdapterConfig {
    fn default() -> Self {
        AdapterConfig {
            rank: 8,
            alpha: 16.0,
            targets: vec![AdapterTarget::Query, AdapterTarget::Value],
            init_std: 0.02,
        }
    }
}

impl AdapterConfig {
    pub fn scale(&self) -> f64 {
        self.alpha / self.rank as f64
    }

    pub fn validate(&self) -> Result<()> {
        if self.rank == 0 {
            return Err(Error::config("adapter rank must be positive"));
        }
        if !self.alpha.is_finite() || !self.init_std.is_finite() || self.init_std < 0.0 {
            return Err(Error::config("adapter alpha and init_std must be finite"));
        }
        if self.targets.is_empty() {
            return Err(Error::config("adapter needs at least one target"));
        }
        let mut seen = [false; 4];
        for t in &self.targets {
            if core::mem::replace(&mut seen[t.index()], true) {
                return Err(Error::config(format!("duplicate adapter target {:?}", t)));
            }
        }
        Ok(())
    }

    /// Targets in canonical (layout) order.
    pub(crate) fn sorted_targets(&self) -> Vec<AdapterTarget> {
        let mut t = self.targets.clone();
        t.sort();
        t
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        ModelConfig::default().validate().unwrap();
        TrainConfig::default().validate().unwrap();
        AdapterConfig::default().validate().unwrap();
    }

    #[test]
    fn head_divisibility_is_enforced() {
        let cfg = ModelConfig { embed_dim: 30, num_heads: 4, ..ModelConfig::default() };
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn zero_batch_rejected() {
        let cfg = TrainConfig { batch_size: 0, ..TrainConfig::default() };
        assert!(cfg.validate().is_err());
    }
}
