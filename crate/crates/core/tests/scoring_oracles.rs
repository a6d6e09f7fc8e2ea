use fsdlab_core::eval::auc;
use fsdlab_core::fsd::{fsd_score, Label};
use fsdlab_core::lm::{finetune, train, FinetuneMode};
use fsdlab_core::scoring::{lowercase_score, perplexity, score, zlib_entropy, ScoreFunctionId};
use fsdlab_core::{LanguageModel, ModelConfig, TrainConfig};

fn small() -> LanguageModel {
    LanguageModel::new(ModelConfig {
        vocab_size: 259,
        context_len: 64,
        embed_dim: 24,
        num_layers: 1,
        num_heads: 2,
        feedforward_dim: 64,
        seed: 11,
    })
    .unwrap()
}

const SEEN: [&str; 4] = [
    "the fair opened in 2015 in Lyon",
    "a summit was held in 2012 at Riga",
    "the cup final took place in 2018",
    "voters went to the polls in 2011",
];
const UNSEEN: [&str; 4] = [
    "Quorvex hosted Zandria on 2024",
    "kelp gala xenith 2023 umbriel",
    "Ythra jumped Wex in Pallisade",
    "ovoid qiln marched through 2023",
];

fn memorised(texts: &[&str]) -> LanguageModel {
    let mut m = small();
    let corpus: Vec<_> = texts.iter().map(|t| m.encode(t.as_bytes())).collect();
    let cfg = TrainConfig { epochs: 60, batch_size: 2, learning_rate: 1e-2, ..Default::default() };
    train(&mut m, &corpus, &cfg).unwrap();
    m
}

#[test]
fn memorised_texts_score_lower() {
    let m = memorised(&SEEN);
    let labels: Vec<Label> = [Label::Member; 4].into_iter().chain([Label::NonMember; 4]).collect();
    // the lowercase ratio is 1 on text that is already lowercase
    for f in &ScoreFunctionId::all(20.0)[..3] {
        let f = *f;
        let scores: Vec<f64> = SEEN.iter().chain(&UNSEEN).map(|t| score(&m, t.as_bytes(), f).unwrap()).collect();
        assert_eq!(auc(&scores, &labels).unwrap(), 1.0, "{f}: {scores:?}");
    }
}

#[test]
fn uppercase_variant_of_memorised_text() {
    let m = memorised(&["abc abc abc abc"]);
    let r = lowercase_score(&m, b"ABC ABC ABC ABC").unwrap();
    assert!(r > 1.0, "{r}");
    let same = lowercase_score(&m, b"abc abc abc abc").unwrap();
    assert!((same - 1.0).abs() < 1e-12);
}

#[test]
fn zlib_score_divides_log_perplexity_by_compressed_bits() {
    let m = memorised(&SEEN);
    let t = SEEN[0].as_bytes();
    let want = perplexity(&m, t).unwrap().ln() / zlib_entropy(t).unwrap();
    let got = score(&m, t, ScoreFunctionId::Zlib).unwrap();
    assert!((got - want).abs() <= 1e-12 * want.abs(), "{got} vs {want}");
}

#[test]
fn finetuning_on_unseen_texts_separates_them() {
    let base = memorised(&SEEN);
    let seqs: Vec<_> = UNSEEN.iter().map(|t| base.encode(t.as_bytes())).collect();
    let cfg = TrainConfig { epochs: 20, batch_size: 2, learning_rate: 5e-3, ..Default::default() };
    let tuned = finetune(&base, &seqs, &FinetuneMode::Full, &cfg).unwrap();
    let f = ScoreFunctionId::Perplexity;
    let dev = |t: &str| fsd_score(&base, &tuned, t.as_bytes(), f).unwrap();
    let seen: Vec<f64> = SEEN.iter().map(|t| dev(t)).collect();
    let unseen: Vec<f64> = UNSEEN.iter().map(|t| dev(t)).collect();
    let lo = seen.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = unseen.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    assert!(unseen.iter().all(|d| *d > 0.0), "{unseen:?}");
    assert!(hi > lo);
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    assert!(mean(&unseen) > mean(&seen), "{seen:?} {unseen:?}");
}
