//! Fine-tuned score deviation: the deviation score, fine-tune set
//! construction and the thresholded level-set detector.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lm::LanguageModel;
use crate::rng;
use crate::scoring::{self, ModelScorer, ScoreFunctionId, Scorer};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Member,
    NonMember,
}

impl Label {
    pub fn is_member(self) -> bool {
        self == Label::Member
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledExample {
    pub id: u64,
    pub text: String,
    pub label: Label,
}

/// Labeled texts with unique ids and non-empty texts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawDataset")]
pub struct LabeledDataset {
    examples: Vec<LabeledExample>,
    provenance: String,
}

#[derive(Deserialize)]
struct RawDataset {
    examples: Vec<LabeledExample>,
    provenance: String,
}

impl TryFrom<RawDataset> for LabeledDataset {
    type Error = Error;
    fn try_from(raw: RawDataset) -> Result<Self> {
        LabeledDataset::new(raw.examples, raw.provenance)
    }
}

impl LabeledDataset {
    pub fn new(examples: Vec<LabeledExample>, provenance: impl Into<String>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for e in &examples {
            if e.text.is_empty() {
                return Err(Error::config(format!("example {} has empty text", e.id)));
            }
            if !seen.insert(e.id) {
                return Err(Error::config(format!("duplicate example id {}", e.id)));
            }
        }
        Ok(LabeledDataset { examples, provenance: provenance.into() })
    }

    /// Ids assigned positionally from 0.
    pub fn from_texts(items: impl IntoIterator<Item = (String, Label)>, provenance: impl Into<String>) -> Result<Self> {
        let examples = items.into_iter().enumerate().map(|(i, (text, label))| LabeledExample { id: i as u64, text, label });
        LabeledDataset::new(examples.collect(), provenance)
    }

    pub fn examples(&self) -> &[LabeledExample] {
        &self.examples
    }

    pub fn provenance(&self) -> &str {
        &self.provenance
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn count(&self, label: Label) -> usize {
        self.examples.iter().filter(|e| e.label == label).count()
    }

    pub fn texts_with(&self, label: Label) -> impl Iterator<Item = &str> {
        self.examples.iter().filter(move |e| e.label == label).map(|e| e.text.as_str())
    }

    /// Rewrite every text, keeping ids and labels.
    pub fn map_texts(&self, f: impl Fn(&str) -> String, provenance: impl Into<String>) -> Result<Self> {
        let examples = self.examples.iter().map(|e| LabeledExample { id: e.id, text: f(&e.text), label: e.label });
        LabeledDataset::new(examples.collect(), provenance)
    }

    pub fn into_examples(self) -> Vec<LabeledExample> {
        self.examples
    }
}

/// `S(base) − S(tuned)` for any pair of scorers.
pub fn deviation(base: &impl Scorer, tuned: &impl Scorer, text: &[u8]) -> Result<f64> {
    Ok(base.score(text)? - tuned.score(text)?)
}

fn check_pair(base: &LanguageModel, tuned: &LanguageModel) -> Result<()> {
    if !base.same_shape(tuned) {
        return Err(Error::ShapeMismatch(format!("{:?} vs {:?}", base.config(), tuned.config())));
    }
    Ok(())
}

/// Fine-tuned score deviation. Lower means more member-like.
pub fn fsd_score(base: &LanguageModel, tuned: &LanguageModel, text: &[u8], function: ScoreFunctionId) -> Result<f64> {
    check_pair(base, tuned)?;
    deviation(&ModelScorer { model: base, function }, &ModelScorer { model: tuned, function }, text)
}

/// Which labels of the sampled split go into the fine-tune set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Composition {
    #[default]
    NonMembers,
    MembersOnly,
    All,
}

impl Composition {
    fn admits(self, label: Label) -> bool {
        match self {
            Composition::NonMembers => label == Label::NonMember,
            Composition::MembersOnly => label == Label::Member,
            Composition::All => true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitConfig {
    pub fraction: f64,
    pub seed: u64,
    pub compose: Composition,
    /// Keep at most this many fine-tune texts (in shuffled order).
    #[serde(default)]
    pub finetune_size: Option<usize>,
    /// Keep at most this many test examples of each label (in dataset order).
    #[serde(default)]
    pub test_per_class: Option<usize>,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig { fraction: 0.3, seed: 42, compose: Composition::NonMembers, finetune_size: None, test_per_class: None }
    }
}

impl SplitConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.fraction > 0.0 && self.fraction < 1.0) {
            return Err(Error::config(format!("split fraction {} outside (0, 1)", self.fraction)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FinetuneSplit {
    /// Label-free fine-tuning texts.
    pub finetune: Vec<String>,
    pub finetune_ids: Vec<u64>,
    /// Admissible texts of the split before the `finetune_size` cap.
    pub pool: Vec<String>,
    pub test: LabeledDataset,
}

/// Shuffle positions with the seeded generator, take the first
/// `⌊fraction·N⌋` as the fine-tune split and keep the rest for testing.
pub fn build_finetune_set(ds: &LabeledDataset, cfg: &SplitConfig) -> Result<FinetuneSplit> {
    cfg.validate()?;
    let n = ds.len();
    let mut order: Vec<usize> = (0..n).collect();
    rng::shuffle(&mut rng::seeded(cfg.seed), &mut order);
    let cut = libm::floor(cfg.fraction * n as f64) as usize;
    let (split, _) = order.split_at(cut);

    let chosen: Vec<&LabeledExample> =
        split.iter().map(|&i| &ds.examples[i]).filter(|e| cfg.compose.admits(e.label)).collect();
    if chosen.is_empty() {
        return Err(Error::EmptyFinetuneSet(format!("no {:?} among the {cut} sampled examples", cfg.compose)));
    }
    let keep = cfg.finetune_size.unwrap_or(usize::MAX).min(chosen.len());
    if keep == 0 {
        return Err(Error::EmptyFinetuneSet("finetune_size is 0".into()));
    }

    let in_split: BTreeSet<usize> = split.iter().copied().collect();
    let cap = cfg.test_per_class.unwrap_or(usize::MAX);
    let (mut members, mut nonmembers) = (0usize, 0usize);
    let mut test = Vec::new();
    for (i, e) in ds.examples.iter().enumerate() {
        if in_split.contains(&i) {
            continue;
        }
        let c = if e.label.is_member() { &mut members } else { &mut nonmembers };
        if *c < cap {
            *c += 1;
            test.push(e.clone());
        }
    }

    Ok(FinetuneSplit {
        finetune: chosen[..keep].iter().map(|e| e.text.clone()).collect(),
        finetune_ids: chosen[..keep].iter().map(|e| e.id).collect(),
        pool: chosen.iter().map(|e| e.text.clone()).collect(),
        test: LabeledDataset::new(test, format!("{} [test split]", ds.provenance))?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Threshold {
    pub epsilon: f64,
    pub accuracy: f64,
}

pub(crate) fn check_labels(scores: &[f64], labels: &[Label]) -> Result<(usize, usize)> {
    if scores.len() != labels.len() {
        return Err(Error::config(format!("{} scores for {} labels", scores.len(), labels.len())));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::Degenerate("NaN score".into()));
    }
    let m = labels.iter().filter(|l| l.is_member()).count();
    let n = labels.len() - m;
    if m == 0 || n == 0 {
        return Err(Error::Degenerate(format!("need both classes, got {m} members and {n} non-members")));
    }
    Ok((m, n))
}

/// Point strictly between `a < b` where possible, else `b`.
fn midpoint(a: f64, b: f64) -> f64 {
    let m = a / 2.0 + b / 2.0;
    if m > a && m < b {
        m
    } else {
        b
    }
}

/// Threshold maximising the accuracy of `score < ε ⇒ member` over the
/// candidates `−∞`, midpoints of consecutive distinct scores and `+∞`.
/// Ties go to the smallest `ε`.
pub fn select_threshold(scores: &[f64], labels: &[Label]) -> Result<Threshold> {
    let (_, n_non) = check_labels(scores, labels)?;
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    let mut correct = n_non;
    let (mut best, mut best_eps) = (correct, f64::NEG_INFINITY);
    let mut i = 0;
    while i < idx.len() {
        let v = scores[idx[i]];
        while i < idx.len() && scores[idx[i]] == v {
            if labels[idx[i]].is_member() {
                correct += 1;
            } else {
                correct -= 1;
            }
            i += 1;
        }
        let eps = if i < idx.len() { midpoint(v, scores[idx[i]]) } else { f64::INFINITY };
        if correct > best {
            best = correct;
            best_eps = eps;
        }
    }
    Ok(Threshold { epsilon: best_eps, accuracy: best as f64 / scores.len() as f64 })
}

/// Fraction of `labels` matched by `score < ε ⇒ member`.
pub fn accuracy_at(scores: &[f64], labels: &[Label], epsilon: f64) -> f64 {
    let hits = scores.iter().zip(labels).filter(|(&s, &l)| (s < epsilon) == l.is_member()).count();
    hits as f64 / scores.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionRule {
    pub function: ScoreFunctionId,
    pub use_fsd: bool,
    pub epsilon: f64,
}

impl DetectionRule {
    pub fn decide(&self, score: f64) -> Label {
        if score < self.epsilon {
            Label::Member
        } else {
            Label::NonMember
        }
    }
}

pub fn classify(rule: &DetectionRule, base: &LanguageModel, tuned: Option<&LanguageModel>, text: &[u8]) -> Result<Label> {
    if rule.epsilon.is_nan() {
        return Err(Error::config("threshold is NaN"));
    }
    let s = if rule.use_fsd {
        let tuned = tuned.ok_or_else(|| Error::config("FSD rule needs a fine-tuned model"))?;
        fsd_score(base, tuned, text, rule.function)?
    } else {
        scoring::score(base, text, rule.function)?
    };
    Ok(rule.decide(s))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lm::{AdapterConfig, ModelConfig};
    use alloc::string::ToString;
    use alloc::vec;
    use proptest::prelude::*;
    use Label::{Member as M, NonMember as N};

    fn tiny() -> LanguageModel {
        LanguageModel::new(ModelConfig {
            vocab_size: 259,
            context_len: 64,
            embed_dim: 16,
            num_layers: 1,
            num_heads: 2,
            feedforward_dim: 32,
            seed: 2,
        })
        .unwrap()
    }

    fn ten() -> LabeledDataset {
        let items = (0..10).map(|i| (format!("text {i}"), if i < 5 { M } else { N }));
        LabeledDataset::from_texts(items, "ten").unwrap()
    }

    struct Shifted<'a>(ModelScorer<'a>, f64);
    impl Scorer for Shifted<'_> {
        fn score(&self, text: &[u8]) -> Result<f64> {
            Ok(self.0.score(text)? + self.1)
        }
    }

    #[test]
    fn dataset_rejects_duplicates_and_empty_text() {
        let e = |id, text: &str| LabeledExample { id, text: text.to_string(), label: M };
        assert!(LabeledDataset::new(vec![e(1, "a"), e(1, "b")], "").is_err());
        assert!(LabeledDataset::new(vec![e(1, "")], "").is_err());
    }

    #[test]
    fn fsd_of_identical_models_is_zero() {
        let m = tiny();
        let mut with_adapters = m.clone();
        with_adapters.attach_adapters(AdapterConfig::default(), 1).unwrap();
        for f in ScoreFunctionId::all(20.0) {
            assert_eq!(fsd_score(&m, &m, b"On 4 May 2019 it rained.", f).unwrap(), 0.0);
            assert_eq!(fsd_score(&m, &with_adapters, b"On 4 May 2019 it rained.", f).unwrap(), 0.0);
        }
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let a = tiny();
        let mut cfg = a.config().clone();
        cfg.embed_dim = 8;
        let b = LanguageModel::new(cfg).unwrap();
        assert!(matches!(fsd_score(&a, &b, b"x", ScoreFunctionId::Zlib), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn constant_shift_cancels() {
        let base = tiny();
        let mut tuned = base.clone();
        tuned.params_mut()[0] += 0.5;
        let f = ScoreFunctionId::Perplexity;
        let plain = fsd_score(&base, &tuned, b"shift me", f).unwrap();
        let c = 17.25;
        let shifted =
            deviation(&Shifted(ModelScorer { model: &base, function: f }, c), &Shifted(ModelScorer { model: &tuned, function: f }, c), b"shift me")
                .unwrap();
        assert!((plain - shifted).abs() < 1e-12);
    }

    #[test]
    fn split_of_ten_matches_manual_enumeration() {
        let ds = ten();
        let mut order: Vec<usize> = (0..10).collect();
        let mut r = rng::seeded(42);
        for i in (1..10).rev() {
            let j = rng::index(&mut r, i + 1);
            order.swap(i, j);
        }
        let sampled = &order[..3];
        let expected: Vec<u64> = sampled.iter().filter(|&&i| i >= 5).map(|&i| i as u64).collect();
        let split = build_finetune_set(&ds, &SplitConfig::default());
        if expected.is_empty() {
            assert!(matches!(split, Err(Error::EmptyFinetuneSet(_))));
        } else {
            let split = split.unwrap();
            assert_eq!(split.test.len(), 7);
            assert_eq!(split.finetune_ids, expected);
        }
        let all = build_finetune_set(&ds, &SplitConfig { compose: Composition::All, ..Default::default() }).unwrap();
        assert_eq!(all.test.len(), 7);
        assert_eq!(all.finetune_ids, sampled.iter().map(|&i| i as u64).collect::<Vec<_>>());
    }

    #[test]
    fn split_without_nonmembers_errors() {
        let ds = LabeledDataset::from_texts((0..6).map(|i| (format!("m{i}"), M)), "").unwrap();
        let err = build_finetune_set(&ds, &SplitConfig::default()).unwrap_err();
        assert!(matches!(err, Error::EmptyFinetuneSet(_)));
    }

    #[test]
    fn threshold_examples() {
        let t = select_threshold(&[1.0, 2.0, 3.0, 4.0], &[M, M, N, N]).unwrap();
        assert_eq!((t.epsilon, t.accuracy), (2.5, 1.0));
        let t = select_threshold(&[1.0, 2.0, 3.0, 4.0], &[N, N, M, M]).unwrap();
        assert_eq!((t.epsilon, t.accuracy), (f64::NEG_INFINITY, 0.5));
        assert!(matches!(select_threshold(&[1.0, 2.0], &[M, M]), Err(Error::Degenerate(_))));
    }

    #[test]
    fn midpoint_of_adjacent_floats_stays_valid() {
        let a = 1.0f64;
        let b = f64::from_bits(a.to_bits() + 1);
        let t = select_threshold(&[a, b], &[M, N]).unwrap();
        assert_eq!(t.accuracy, 1.0);
    }

    #[test]
    fn classify_boundaries() {
        let m = tiny();
        let f = ScoreFunctionId::Perplexity;
        let s = scoring::score(&m, b"edge", f).unwrap();
        let rule = |epsilon| DetectionRule { function: f, use_fsd: false, epsilon };
        assert_eq!(classify(&rule(s), &m, None, b"edge").unwrap(), N);
        assert_eq!(classify(&rule(f64::INFINITY), &m, None, b"edge").unwrap(), M);
        assert_eq!(classify(&rule(f64::NEG_INFINITY), &m, None, b"edge").unwrap(), N);
        let fsd = DetectionRule { use_fsd: true, ..rule(0.0) };
        assert!(matches!(classify(&fsd, &m, None, b"edge"), Err(Error::Config(_))));
        assert_eq!(classify(&fsd, &m, Some(&m), b"edge").unwrap(), N);
    }

    fn labeled(n: usize) -> impl Strategy<Value = (Vec<f64>, Vec<Label>)> {
        proptest::collection::vec((0i32..8, any::<bool>()), 2..n).prop_map(|v| {
            let scores = v.iter().map(|&(s, _)| s as f64 * 0.5).collect();
            let labels = v.iter().map(|&(_, m)| if m { M } else { N }).collect();
            (scores, labels)
        })
    }

    proptest! {
        #[test]
        fn threshold_is_optimal_and_reproducible((scores, labels) in labeled(40)) {
            prop_assume!(labels.contains(&M) && labels.contains(&N));
            let t = select_threshold(&scores, &labels).unwrap();
            let mut sorted = scores.clone();
            sorted.sort_by(f64::total_cmp);
            sorted.dedup();
            let mut candidates = vec![f64::NEG_INFINITY, f64::INFINITY];
            candidates.extend(sorted.windows(2).map(|w| (w[0] + w[1]) / 2.0));
            let best = candidates.iter().map(|&c| accuracy_at(&scores, &labels, c)).fold(0.0, f64::max);
            prop_assert_eq!(t.accuracy, best);
            prop_assert_eq!(accuracy_at(&scores, &labels, t.epsilon), t.accuracy);
            let m = labels.iter().filter(|l| l.is_member()).count();
            let majority = m.max(labels.len() - m) as f64 / labels.len() as f64;
            prop_assert!(t.accuracy >= majority);
        }

        #[test]
        fn split_partitions_ids(n in 2usize..60, fraction in 0.05f64..0.95, seed in any::<u64>()) {
            let ds = LabeledDataset::from_texts((0..n).map(|i| (format!("t{i}"), if i % 2 == 0 { M } else { N })), "").unwrap();
            let cfg = SplitConfig { fraction, seed, compose: Composition::All, ..Default::default() };
            match build_finetune_set(&ds, &cfg) {
                Ok(s) => {
                    let again = build_finetune_set(&ds, &cfg).unwrap();
                    prop_assert_eq!(&s, &again);
                    let mut ids: Vec<u64> = s.finetune_ids.clone();
                    ids.extend(s.test.examples().iter().map(|e| e.id));
                    ids.sort();
                    prop_assert_eq!(ids, (0..n as u64).collect::<Vec<_>>());
                }
                Err(e) => prop_assert!(matches!(e, Error::EmptyFinetuneSet(_))),
            }
        }
    }
}
