//! Detection metrics, score records and experiment orchestration.

mod experiment;
mod metrics;

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

pub use experiment::{
    ablate_data_size, finetune_on_texts, run_experiment, shift_study, AblationPoint, ExperimentConfig, Shift,
};
pub use metrics::{auc, best_accuracy, tpr_at_fpr, FPR_BUDGET};

use crate::error::{Error, Result};
use crate::fsd::{Label, LabeledDataset, SplitConfig};
use crate::lm::{FinetuneMode, LanguageModel, TrainConfig};
use crate::par;
use crate::scoring::{score_many, ScoreFunctionId};

/// One example scored by one function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub id: u64,
    pub function: ScoreFunctionId,
    pub base_score: f64,
    /// Present exactly when a fine-tuned model was supplied.
    pub fsd_score: Option<f64>,
    pub label: Label,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub auc: f64,
    pub tpr_at_5_fpr: f64,
    pub accuracy: f64,
}

impl Metrics {
    pub fn compute(scores: &[f64], labels: &[Label]) -> Result<Self> {
        Ok(Metrics {
            auc: auc(scores, labels)?,
            tpr_at_5_fpr: tpr_at_fpr(scores, labels, FPR_BUDGET)?,
            accuracy: best_accuracy(scores, labels)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionReport {
    pub function: ScoreFunctionId,
    pub base: Metrics,
    pub fsd: Option<Metrics>,
}

/// Mean test-set perplexity per class under the base and fine-tuned model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerplexityShift {
    pub member_base: f64,
    pub member_tuned: f64,
    pub nonmember_base: f64,
    pub nonmember_tuned: f64,
}

impl PerplexityShift {
    pub fn member_drop(&self) -> f64 {
        self.member_base - self.member_tuned
    }

    pub fn nonmember_drop(&self) -> f64 {
        self.nonmember_base - self.nonmember_tuned
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub dataset: String,
    pub n_test_members: usize,
    pub n_test_nonmembers: usize,
    pub n_finetune: usize,
    pub transform: Shift,
    pub split: Option<SplitConfig>,
    pub finetune: Option<TrainConfig>,
    pub mode: Option<FinetuneMode>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub metadata: ReportMetadata,
    pub results: Vec<FunctionReport>,
    pub perplexity_shift: Option<PerplexityShift>,
}

impl EvalReport {
    pub fn function(&self, function: ScoreFunctionId) -> Option<&FunctionReport> {
        self.results.iter().find(|r| r.function == function)
    }

    /// Flat `(function, k, variant, metric, value)` rows in report order.
    pub fn rows(&self) -> Vec<(&'static str, Option<f64>, &'static str, &'static str, f64)> {
        let mut out = Vec::new();
        for r in &self.results {
            for (variant, m) in [("base", Some(r.base)), ("fsd", r.fsd)] {
                if let Some(m) = m {
                    for (metric, v) in [("auc", m.auc), ("tpr_at_5_fpr", m.tpr_at_5_fpr), ("accuracy", m.accuracy)] {
                        out.push((r.function.name(), r.function.k_percent(), variant, metric, v));
                    }
                }
            }
        }
        out
    }
}

/// Scores of the test set under `base` and, if given, the deviation to
/// `tuned`. Records are example-major in dataset order.
pub fn evaluate_models(
    base: &LanguageModel,
    tuned: Option<&LanguageModel>,
    test: &LabeledDataset,
    functions: &[ScoreFunctionId],
) -> Result<(Vec<ScoreRecord>, Option<PerplexityShift>)> {
    if let Some(t) = tuned {
        if !base.same_shape(t) {
            return Err(Error::ShapeMismatch(format!("{:?} vs {:?}", base.config(), t.config())));
        }
    }
    let scored = par::map(test.examples(), |e| {
        let b = score_many(base, e.text.as_bytes(), functions)?;
        let t = tuned.map(|t| score_many(t, e.text.as_bytes(), functions)).transpose()?;
        Ok::<_, Error>((b, t))
    });

    let mut records = Vec::with_capacity(test.len() * functions.len());
    let mut ppl = [[0.0f64; 2]; 2];
    let mut counts = [0usize; 2];
    for (e, r) in test.examples().iter().zip(scored) {
        let (b, t) = r?;
        let class = usize::from(!e.label.is_member());
        counts[class] += 1;
        ppl[class][0] += b.perplexity;
        if let Some(t) = &t {
            ppl[class][1] += t.perplexity;
        }
        for (i, &function) in functions.iter().enumerate() {
            records.push(ScoreRecord {
                id: e.id,
                function,
                base_score: b.scores[i],
                fsd_score: t.as_ref().map(|t| b.scores[i] - t.scores[i]),
                label: e.label,
            });
        }
    }
    let shift = (tuned.is_some() && counts.iter().all(|&c| c > 0)).then(|| PerplexityShift {
        member_base: ppl[0][0] / counts[0] as f64,
        member_tuned: ppl[0][1] / counts[0] as f64,
        nonmember_base: ppl[1][0] / counts[1] as f64,
        nonmember_tuned: ppl[1][1] / counts[1] as f64,
    });
    Ok((records, shift))
}

/// Base and FSD metrics for each function, in the order given.
pub fn report_from_records(
    records: &[ScoreRecord],
    functions: &[ScoreFunctionId],
    metadata: ReportMetadata,
    perplexity_shift: Option<PerplexityShift>,
) -> Result<EvalReport> {
    let mut results = Vec::with_capacity(functions.len());
    for &function in functions {
        let rows: Vec<&ScoreRecord> = records.iter().filter(|r| r.function == function).collect();
        let labels: Vec<Label> = rows.iter().map(|r| r.label).collect();
        let base: Vec<f64> = rows.iter().map(|r| r.base_score).collect();
        let fsd: Option<Vec<f64>> = rows.iter().map(|r| r.fsd_score).collect();
        if fsd.is_none() && rows.iter().any(|r| r.fsd_score.is_some()) {
            return Err(Error::config(format!("{function}: FSD scores present for only some records")));
        }
        results.push(FunctionReport {
            function,
            base: Metrics::compute(&base, &labels)?,
            fsd: fsd.filter(|_| !rows.is_empty()).map(|s| Metrics::compute(&s, &labels)).transpose()?,
        });
    }
    Ok(EvalReport { metadata, results, perplexity_shift })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lm::ModelConfig;

    fn tiny() -> LanguageModel {
        LanguageModel::new(ModelConfig {
            vocab_size: 259,
            context_len: 64,
            embed_dim: 16,
            num_layers: 1,
            num_heads: 2,
            feedforward_dim: 32,
            seed: 4,
        })
        .unwrap()
    }

    fn ds() -> LabeledDataset {
        let items = (0..12).map(|i| {
            (format!("Event number {i} in {}", 2010 + i), if i % 3 == 0 { Label::NonMember } else { Label::Member })
        });
        LabeledDataset::from_texts(items, "toy").unwrap()
    }

    #[test]
    fn tuned_equal_to_base_gives_half_auc() {
        let m = tiny();
        let fns = ScoreFunctionId::all(20.0);
        let (records, shift) = evaluate_models(&m, Some(&m), &ds(), &fns).unwrap();
        assert!(records.iter().all(|r| r.fsd_score == Some(0.0)));
        let shift = shift.unwrap();
        assert_eq!(shift.member_drop(), 0.0);
        let report = report_from_records(&records, &fns, ReportMetadata::default(), Some(shift)).unwrap();
        let (only_base, _) = evaluate_models(&m, None, &ds(), &fns).unwrap();
        let base_report = report_from_records(&only_base, &fns, ReportMetadata::default(), None).unwrap();
        for (r, b) in report.results.iter().zip(&base_report.results) {
            assert_eq!(r.base, b.base);
            assert_eq!(r.fsd.unwrap().auc, 0.5);
            assert!(b.fsd.is_none());
        }
    }

    #[test]
    fn rows_cover_every_metric() {
        let m = tiny();
        let fns = [ScoreFunctionId::Perplexity, ScoreFunctionId::MinK { k_percent: 50.0 }];
        let (records, _) = evaluate_models(&m, Some(&m), &ds(), &fns).unwrap();
        let report = report_from_records(&records, &fns, ReportMetadata::default(), None).unwrap();
        let rows = report.rows();
        assert_eq!(rows.len(), 2 * 2 * 3);
        assert_eq!(rows[3], ("perplexity", None, "fsd", "auc", 0.5));
        assert_eq!(rows[6].1, Some(50.0));
        assert!(rows.iter().all(|r| (0.0..=1.0).contains(&r.4)));
    }
}
