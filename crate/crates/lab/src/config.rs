//! Single-document run configuration.

use std::path::{Path, PathBuf};

use fsdlab_core::corpus::CorpusConfig;
use fsdlab_core::eval::ExperimentConfig;
use fsdlab_core::fsd::SplitConfig;
use fsdlab_core::lm::{FinetuneMode, ModelConfig, TrainConfig};
use fsdlab_core::scoring::{ScoreFunctionId, DEFAULT_K_PERCENT};
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::io;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoringConfig {
    /// Names among `perplexity`, `mink`, `zlib`, `lowercase`.
    pub functions: Vec<String>,
    /// Min-k% percentage.
    pub k: f64,
}

impl Default for ScoringConfig {
    fn default() -> Self {
        ScoringConfig { functions: ScoreFunctionId::all(0.0).iter().map(|f| f.name().into()).collect(), k: DEFAULT_K_PERCENT }
    }
}

/// Every knob of a run. Unknown keys are rejected and every seed must be
/// spelled out.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub pretrain: TrainConfig,
    pub corpus: CorpusConfig,
    pub experiment: ExperimentConfig,
    pub scoring: ScoringConfig,
    pub output_dir: PathBuf,
}

impl RunConfig {
    /// Desk-scale setting: 2,000 members, 100 fine-tune non-members, 300
    /// test texts per class, full fine-tuning.
    pub fn desk() -> Self {
        RunConfig {
            model: ModelConfig::default(),
            pretrain: TrainConfig::default(),
            corpus: CorpusConfig::default(),
            experiment: ExperimentConfig {
                split: SplitConfig { finetune_size: Some(100), test_per_class: Some(300), ..Default::default() },
                finetune: TrainConfig::default(),
                mode: FinetuneMode::Full,
            },
            scoring: ScoringConfig::default(),
            output_dir: "runs/desk".into(),
        }
    }

    pub fn from_json(text: &str, origin: &Path) -> Result<Self> {
        let cfg: RunConfig =
            serde_json::from_str(text).map_err(|e| LabError::Config { path: origin.into(), message: e.to_string() })?;
        cfg.validate().map_err(|e| LabError::Config { path: origin.into(), message: e.to_string() })?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = io::read(path)?;
        let text = String::from_utf8(bytes).map_err(|e| LabError::Config { path: path.into(), message: e.to_string() })?;
        RunConfig::from_json(&text, path)
    }

    pub fn validate(&self) -> fsdlab_core::Result<()> {
        self.model.validate()?;
        self.pretrain.validate()?;
        self.experiment.finetune.validate()?;
        self.experiment.split.validate()?;
        if let FinetuneMode::Lora(a) = &self.experiment.mode {
            a.validate()?;
        }
        self.corpus.validate()?;
        if self.corpus.max_len >= self.model.context_len {
            return Err(fsdlab_core::Error::Config(format!(
                "corpus max_len {} must be below context_len {}",
                self.corpus.max_len, self.model.context_len
            )));
        }
        self.functions().map(|_| ())
    }

    pub fn functions(&self) -> fsdlab_core::Result<Vec<ScoreFunctionId>> {
        self.scoring.functions.iter().map(|n| ScoreFunctionId::parse(n, Some(self.scoring.k))).collect()
    }

    pub fn with_k(&self, k: f64) -> RunConfig {
        RunConfig { scoring: ScoringConfig { k, ..self.scoring.clone() }, ..self.clone() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn desk_round_trips() {
        let cfg = RunConfig::desk();
        let text = serde_json::to_string_pretty(&cfg).unwrap();
        assert_eq!(RunConfig::from_json(&text, Path::new("x")).unwrap(), cfg);
    }

    #[test]
    fn unknown_keys_and_missing_seeds_are_rejected() {
        let mut v = serde_json::to_value(RunConfig::desk()).unwrap();
        v["model"]["dropout"] = 0.1.into();
        assert!(RunConfig::from_json(&v.to_string(), Path::new("x")).is_err());
        let mut v = serde_json::to_value(RunConfig::desk()).unwrap();
        v["corpus"].as_object_mut().unwrap().remove("seed");
        assert!(RunConfig::from_json(&v.to_string(), Path::new("x")).is_err());
        let mut v = serde_json::to_value(RunConfig::desk()).unwrap();
        v["experiment"]["split"].as_object_mut().unwrap().remove("seed");
        assert!(RunConfig::from_json(&v.to_string(), Path::new("x")).is_err());
    }

    #[test]
    fn bad_function_name_is_a_config_error() {
        let mut cfg = RunConfig::desk();
        cfg.scoring.functions.push("entropy".into());
        assert!(cfg.validate().is_err());
    }
}
