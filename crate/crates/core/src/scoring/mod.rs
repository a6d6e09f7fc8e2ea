//! Membership scoring functions.
//!
//! Every score is oriented so that a lower value means "more likely a
//! member": a text is flagged as training data when its score falls below a
//! threshold.

mod zlib;

use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lm::LanguageModel;

pub const DEFAULT_K_PERCENT: f64 = 20.0;
pub const ZLIB_LEVEL: i32 = 6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "lowercase", deny_unknown_fields)]
pub enum ScoreFunctionId {
    Perplexity,
    #[serde(rename = "mink")]
    MinK {
        k_percent: f64,
    },
    Zlib,
    Lowercase,
}

impl ScoreFunctionId {
    pub fn min_k(k_percent: f64) -> Result<Self> {
        let id = ScoreFunctionId::MinK { k_percent };
        id.validate()?;
        Ok(id)
    }

    /// The four functions, Min-k% at `k_percent`.
    pub fn all(k_percent: f64) -> [ScoreFunctionId; 4] {
        [
            ScoreFunctionId::Perplexity,
            ScoreFunctionId::MinK { k_percent },
            ScoreFunctionId::Zlib,
            ScoreFunctionId::Lowercase,
        ]
    }

    pub fn validate(&self) -> Result<()> {
        if let ScoreFunctionId::MinK { k_percent } = *self {
            if !(k_percent > 0.0 && k_percent <= 100.0) {
                return Err(Error::Config(alloc::format!("k_percent {k_percent} outside (0, 100]")));
            }
        }
        Ok(())
    }

    pub fn name(&self) -> &'static str {
        match self {
            ScoreFunctionId::Perplexity => "perplexity",
            ScoreFunctionId::MinK { .. } => "mink",
            ScoreFunctionId::Zlib => "zlib",
            ScoreFunctionId::Lowercase => "lowercase",
        }
    }

    pub fn k_percent(&self) -> Option<f64> {
        match *self {
            ScoreFunctionId::MinK { k_percent } => Some(k_percent),
            _ => None,
        }
    }

    /// Inverse of ([`name`](Self::name), [`k_percent`](Self::k_percent)).
    pub fn parse(name: &str, k_percent: Option<f64>) -> Result<Self> {
        let id = match name {
            "perplexity" => ScoreFunctionId::Perplexity,
            "mink" => ScoreFunctionId::MinK { k_percent: k_percent.unwrap_or(DEFAULT_K_PERCENT) },
            "zlib" => ScoreFunctionId::Zlib,
            "lowercase" => ScoreFunctionId::Lowercase,
            other => return Err(Error::Config(alloc::format!("unknown scoring function {other:?}"))),
        };
        id.validate()?;
        Ok(id)
    }
}

impl fmt::Display for ScoreFunctionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScoreFunctionId::MinK { k_percent } => write!(f, "mink@{k_percent}"),
            other => f.write_str(other.name()),
        }
    }
}

/// Anything that maps a text to a membership score.
pub trait Scorer {
    fn score(&self, text: &[u8]) -> Result<f64>;
}

/// A model paired with one scoring function.
#[derive(Clone, Copy)]
pub struct ModelScorer<'a> {
    pub model: &'a LanguageModel,
    pub function: ScoreFunctionId,
}

impl Scorer for ModelScorer<'_> {
    fn score(&self, text: &[u8]) -> Result<f64> {
        score(self.model, text, self.function)
    }
}

fn logprobs(model: &LanguageModel, text: &[u8]) -> Result<Vec<f64>> {
    if text.is_empty() {
        return Err(Error::EmptyInput);
    }
    model.token_logprobs(&model.encode(text))
}

/// `exp(−mean log p)` over the given per-token log-probabilities.
pub fn perplexity_of(logprobs: &[f64]) -> f64 {
    libm::exp(-mean(logprobs))
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Mean of the `max(1, ⌊k·n/100⌋)` smallest log-probabilities; equal values
/// are taken in position order.
pub fn min_k_of(logprobs: &[f64], k_percent: f64) -> f64 {
    let n = logprobs.len();
    let e = (libm::floor(k_percent * n as f64 / 100.0) as usize).clamp(1, n);
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| logprobs[a].total_cmp(&logprobs[b]).then(a.cmp(&b)));
    idx[..e].iter().map(|&i| logprobs[i]).sum::<f64>() / e as f64
}

pub fn perplexity(model: &LanguageModel, text: &[u8]) -> Result<f64> {
    Ok(perplexity_of(&logprobs(model, text)?))
}

/// Raw Min-k% value (higher means more member-like).
pub fn min_k_raw(model: &LanguageModel, text: &[u8], k_percent: f64) -> Result<f64> {
    ScoreFunctionId::min_k(k_percent)?;
    Ok(min_k_of(&logprobs(model, text)?, k_percent))
}

/// `8 ×` the zlib-compressed length of `text` at level 6, in bits.
pub fn zlib_entropy(text: &[u8]) -> Result<f64> {
    if text.is_empty() {
        return Err(Error::EmptyInput);
    }
    Ok(8.0 * zlib::compressed_len(text, ZLIB_LEVEL) as f64)
}

/// `ln(perplexity) / zlib_entropy`.
pub fn zlib_score(model: &LanguageModel, text: &[u8]) -> Result<f64> {
    let lp = logprobs(model, text)?;
    Ok(-mean(&lp) / zlib_entropy(text)?)
}

/// `perplexity(text) / perplexity(lowercase(text))`.
pub fn lowercase_score(model: &LanguageModel, text: &[u8]) -> Result<f64> {
    let lp = logprobs(model, text)?;
    lowercase_ratio(model, text, &lp)
}

fn lowercase_ratio(model: &LanguageModel, text: &[u8], lp: &[f64]) -> Result<f64> {
    let lower = simple_lowercase(text);
    if lower == text {
        return Ok(1.0);
    }
    Ok(perplexity_of(lp) / perplexity_of(&logprobs(model, &lower)?))
}

/// Lowercase each valid UTF-8 scalar with its simple (one-to-one) Unicode
/// mapping; invalid byte sequences pass through untouched.
pub fn simple_lowercase(text: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(text.len());
    for chunk in text.utf8_chunks() {
        let mut buf = [0u8; 4];
        for c in chunk.valid().chars() {
            let lower = c.to_lowercase().next().unwrap_or(c);
            out.extend_from_slice(lower.encode_utf8(&mut buf).as_bytes());
        }
        out.extend_from_slice(chunk.invalid());
    }
    out
}

/// Score one text with one function.
pub fn score(model: &LanguageModel, text: &[u8], function: ScoreFunctionId) -> Result<f64> {
    Ok(score_many(model, text, &[function])?.scores[0])
}

/// Scores of one text under several functions from a single forward pass
/// (plus one more for the lowercased text when needed).
#[derive(Debug, Clone, PartialEq)]
pub struct TextScores {
    pub scores: Vec<f64>,
    pub perplexity: f64,
}

pub fn score_many(model: &LanguageModel, text: &[u8], functions: &[ScoreFunctionId]) -> Result<TextScores> {
    for f in functions {
        f.validate()?;
    }
    let lp = logprobs(model, text)?;
    let mut scores = Vec::with_capacity(functions.len());
    for f in functions {
        let s = match *f {
            ScoreFunctionId::Perplexity => perplexity_of(&lp),
            ScoreFunctionId::MinK { k_percent } => -min_k_of(&lp, k_percent),
            ScoreFunctionId::Zlib => -mean(&lp) / zlib_entropy(text)?,
            ScoreFunctionId::Lowercase => lowercase_ratio(model, text, &lp)?,
        };
        scores.push(s);
    }
    Ok(TextScores { scores, perplexity: perplexity_of(&lp) })
}
