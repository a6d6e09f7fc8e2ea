//! The stages behind each CLI verb.

use std::path::Path;

use fsdlab_core::corpus::generate;
use fsdlab_core::eval::{
    evaluate_models, finetune_on_texts, report_from_records, EvalReport, ExperimentConfig, ReportMetadata, ScoreRecord,
};
use fsdlab_core::fsd::{build_finetune_set, Composition, FinetuneSplit, Label, LabeledDataset};
use fsdlab_core::lm::{train, TrainReport};
use fsdlab_core::scoring::ScoreFunctionId;
use fsdlab_core::{LanguageModel, TokenSeq};

use crate::config::RunConfig;
use crate::error::Result;
use crate::io;

pub fn pretrain(cfg: &RunConfig, ds: &LabeledDataset) -> Result<(LanguageModel, TrainReport)> {
    let mut model = LanguageModel::new(cfg.model.clone())?;
    let members: Vec<TokenSeq> = ds.texts_with(Label::Member).map(|t| model.encode(t.as_bytes())).collect();
    let report = train(&mut model, &members, &cfg.pretrain)?;
    Ok((model, report))
}

pub fn experiment_with(cfg: &RunConfig, compose: Option<Composition>) -> ExperimentConfig {
    let mut x = cfg.experiment.clone();
    if let Some(c) = compose {
        x.split.compose = c;
    }
    x
}

pub fn split(ds: &LabeledDataset, x: &ExperimentConfig) -> Result<FinetuneSplit> {
    Ok(build_finetune_set(ds, &x.split)?)
}

pub fn finetune(base: &LanguageModel, texts: &[String], x: &ExperimentConfig) -> Result<LanguageModel> {
    Ok(finetune_on_texts(base, texts, x)?)
}

pub fn score(
    base: &LanguageModel,
    tuned: Option<&LanguageModel>,
    ds: &LabeledDataset,
    functions: &[ScoreFunctionId],
) -> Result<(Vec<ScoreRecord>, Option<fsdlab_core::eval::PerplexityShift>)> {
    Ok(evaluate_models(base, tuned, ds, functions)?)
}

pub fn metadata(ds: &LabeledDataset, n_finetune: usize, x: Option<&ExperimentConfig>) -> ReportMetadata {
    ReportMetadata {
        dataset: ds.provenance().into(),
        n_test_members: ds.count(Label::Member),
        n_test_nonmembers: ds.count(Label::NonMember),
        n_finetune,
        split: x.map(|x| x.split.clone()),
        finetune: x.map(|x| x.finetune.clone()),
        mode: x.map(|x| x.mode.clone()),
        ..Default::default()
    }
}

/// Files written by [`run`], relative to the output directory.
pub const RUN_FILES: [&str; 7] =
    ["corpus.jsonl", "model.bin", "tuned.bin", "test.jsonl", "scores.csv", "report.json", "report.csv"];

/// Generate, pretrain, split, fine-tune, score and report, writing every
/// artifact under `out`.
pub fn run(cfg: &RunConfig, out: &Path) -> Result<EvalReport> {
    let functions = cfg.functions()?;
    let ds = generate(&cfg.corpus)?;
    io::save_jsonl(&out.join("corpus.jsonl"), &ds)?;
    let (base, _) = pretrain(cfg, &ds)?;
    io::save_model(&out.join("model.bin"), &base)?;
    let x = &cfg.experiment;
    let s = split(&ds, x)?;
    let tuned = finetune(&base, &s.finetune, x)?;
    io::save_model(&out.join("tuned.bin"), &tuned)?;
    io::save_jsonl(&out.join("test.jsonl"), &s.test)?;
    let (records, shift) = score(&base, Some(&tuned), &s.test, &functions)?;
    io::write_scores(&out.join("scores.csv"), &records)?;
    let report = report_from_records(&records, &functions, metadata(&s.test, s.finetune.len(), Some(x)), shift)?;
    io::write_json(&out.join("report.json"), &report)?;
    io::write_report_csv(&out.join("report.csv"), &[], &[(Vec::new(), &report)])?;
    Ok(report)
}
