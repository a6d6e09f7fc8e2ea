//! End-to-end runs: split, fine-tune, score, summarise.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{evaluate_models, report_from_records, EvalReport, ReportMetadata};
use crate::corpus::{transform_deletion, transform_replacement};
use crate::error::{Error, Result};
use crate::fsd::{build_finetune_set, Label, LabeledDataset, SplitConfig};
use crate::lm::{finetune, FinetuneMode, LanguageModel, TokenSeq, TrainConfig};
use crate::scoring::ScoreFunctionId;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub split: SplitConfig,
    pub finetune: TrainConfig,
    pub mode: FinetuneMode,
}

/// Rewrite applied to every text before a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shift {
    #[default]
    None,
    Deletion,
    Replacement { target_year: u32 },
}

impl Shift {
    pub fn apply(&self, text: &str) -> String {
        match *self {
            Shift::None => text.into(),
            Shift::Deletion => transform_deletion(text),
            Shift::Replacement { target_year } => transform_replacement(text, target_year),
        }
    }
}

pub fn finetune_on_texts(
    base: &LanguageModel,
    texts: &[String],
    cfg: &ExperimentConfig,
) -> Result<LanguageModel> {
    let seqs: Vec<TokenSeq> = texts.iter().map(|t| base.encode(t.as_bytes())).collect();
    finetune(base, &seqs, &cfg.mode, &cfg.finetune)
}

fn metadata(ds: &LabeledDataset, test: &LabeledDataset, n_finetune: usize, cfg: Option<&ExperimentConfig>) -> ReportMetadata {
    ReportMetadata {
        dataset: ds.provenance().into(),
        n_test_members: test.count(Label::Member),
        n_test_nonmembers: test.count(Label::NonMember),
        n_finetune,
        transform: Shift::None,
        split: cfg.map(|c| c.split.clone()),
        finetune: cfg.map(|c| c.finetune.clone()),
        mode: cfg.map(|c| c.mode.clone()),
    }
}

/// Split, fine-tune on the sampled texts, and report Base and FSD metrics
/// on the held-out test set.
pub fn run_experiment(
    base: &LanguageModel,
    ds: &LabeledDataset,
    functions: &[ScoreFunctionId],
    cfg: &ExperimentConfig,
) -> Result<EvalReport> {
    if functions.is_empty() {
        return Ok(EvalReport { metadata: ReportMetadata { dataset: ds.provenance().into(), ..Default::default() }, results: Vec::new(), perplexity_shift: None });
    }
    let split = build_finetune_set(ds, &cfg.split)?;
    let tuned = finetune_on_texts(base, &split.finetune, cfg)?;
    let (records, shift) = evaluate_models(base, Some(&tuned), &split.test, functions)?;
    report_from_records(&records, functions, metadata(ds, &split.test, split.finetune.len(), Some(cfg)), shift)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationPoint {
    pub size: usize,
    pub report: EvalReport,
}

/// One report per fine-tune set size on a fixed test split. Each size takes
/// the leading texts of the same seeded pool, so smaller sets are prefixes
/// of larger ones. Size 0 reports the base model alone.
pub fn ablate_data_size(
    base: &LanguageModel,
    ds: &LabeledDataset,
    sizes: &[usize],
    functions: &[ScoreFunctionId],
    cfg: &ExperimentConfig,
) -> Result<Vec<AblationPoint>> {
    if sizes.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::config("ablation sizes must be non-decreasing"));
    }
    let split_cfg = SplitConfig { finetune_size: None, ..cfg.split.clone() };
    let split = build_finetune_set(ds, &split_cfg)?;
    if let Some(&s) = sizes.iter().find(|&&s| s > split.pool.len()) {
        return Err(Error::config(format!("size {s} exceeds the {} available fine-tune texts", split.pool.len())));
    }
    let mut out = Vec::with_capacity(sizes.len());
    for &size in sizes {
        let tuned = if size == 0 { None } else { Some(finetune_on_texts(base, &split.pool[..size], cfg)?) };
        let (records, shift) = evaluate_models(base, tuned.as_ref(), &split.test, functions)?;
        let report = report_from_records(&records, functions, metadata(ds, &split.test, size, Some(cfg)), shift)?;
        out.push(AblationPoint { size, report });
    }
    Ok(out)
}

/// [`run_experiment`] on the dataset rewritten by each transform in turn.
pub fn shift_study(
    base: &LanguageModel,
    ds: &LabeledDataset,
    transforms: &[Shift],
    functions: &[ScoreFunctionId],
    cfg: &ExperimentConfig,
) -> Result<Vec<(Shift, EvalReport)>> {
    transforms
        .iter()
        .map(|&t| {
            let mut report = if t == Shift::None {
                run_experiment(base, ds, functions, cfg)?
            } else {
                let shifted = ds.map_texts(|s| t.apply(s), ds.provenance())?;
                run_experiment(base, &shifted, functions, cfg)?
            };
            report.metadata.transform = t;
            Ok((t, report))
        })
        .collect()
}
