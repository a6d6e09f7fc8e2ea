use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand_distr::{Distribution, Normal};

use super::config::{AdapterConfig, ModelConfig};
use super::layout::{AdapterLayout, Layout, TensorSpec};
use super::transformer::{AdapterView, Net};
use super::vocab::{encode, TokenSeq, Vocab};
use crate::error::{Error, Result};
use crate::math::{log_softmax_inplace, Scalar};
use crate::rng;

const INIT_STD: f64 = 0.02;

/// Low-rank deltas on attention projections: `W' = W + (alpha / rank) · A · B`
/// with `A` stored `[in, rank]` and `B` stored `[rank, out]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AdapterSet {
    config: AdapterConfig,
    layout: AdapterLayout,
    params: Vec<f32>,
}

impl AdapterSet {
    /// `A ~ N(0, init_std²)`, `B = 0`, so the adapted model starts out
    /// identical to its base.
    pub fn new(model: &ModelConfig, config: AdapterConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let layout = AdapterLayout::new(model, &config);
        let mut params = vec![0.0f32; layout.total];
        let mut rng = rng::seeded(seed);
        let normal = Normal::new(0.0, config.init_std).map_err(|e| Error::config(format!("{e}")))?;
        for t in layout.tensors.iter().filter(|t| t.name.ends_with("lora_a")) {
            for p in &mut params[t.range()] {
                *p = normal.sample(&mut rng) as f32;
            }
        }
        Ok(AdapterSet { config, layout, params })
    }

    pub(crate) fn from_parts(model: &ModelConfig, config: AdapterConfig, params: Vec<f32>) -> Result<Self> {
        config.validate()?;
        let layout = AdapterLayout::new(model, &config);
        if params.len() != layout.total {
            return Err(Error::ShapeMismatch(format!(
                "adapter params have {} values, layout needs {}",
                params.len(),
                layout.total
            )));
        }
        Ok(AdapterSet { config, layout, params })
    }

    pub fn config(&self) -> &AdapterConfig {
        &self.config
    }

    pub fn tensors(&self) -> &[TensorSpec] {
        &self.layout.tensors
    }

    pub(crate) fn layout(&self) -> &AdapterLayout {
        &self.layout
    }

    pub fn params(&self) -> &[f32] {
        &self.params
    }

    pub(crate) fn params_mut(&mut self) -> &mut [f32] {
        &mut self.params
    }

    pub fn tensor(&self, name: &str) -> Option<&[f32]> {
        self.layout.tensors.iter().find(|t| t.name == name).map(|t| &self.params[t.range()])
    }
}

/// Small pre-norm transformer decoder over a byte vocabulary.
///
/// Parameters live in one flat `f32` vector described by a [`Layout`].
/// Scoring runs the network in `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct LanguageModel {
    config: ModelConfig,
    layout: Layout,
    params: Vec<f32>,
    adapters: Option<AdapterSet>,
}

impl LanguageModel {
    /// Randomly initialised model (GPT-2 style: N(0, 0.02²) weights, residual
    /// output projections scaled by 1/√(2·layers), zero biases, unit gains).
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let layout = Layout::new(&config);
        let mut params = vec![0.0f32; layout.total];
        let mut rng = rng::seeded(config.seed);
        let normal = Normal::new(0.0, INIT_STD).expect("valid std");
        let resid = 1.0 / libm::sqrt(2.0 * config.num_layers as f64);
        for t in &layout.tensors {
            let n = &t.name;
            let slot = &mut params[t.range()];
            if n.ends_with("ln1") || n.ends_with("ln2") || n == "ln_f" {
                slot[..config.embed_dim].fill(1.0);
            } else if n.ends_with("bias") {
                // zero
            } else {
                let scale = if n.ends_with("attn.o.weight") || n.ends_with("mlp.down.weight") { resid } else { 1.0 };
                for p in slot.iter_mut() {
                    *p = (normal.sample(&mut rng) * scale) as f32;
                }
            }
        }
        Ok(LanguageModel { config, layout, params, adapters: None })
    }

    /// Model whose output head is all zeros, so every next-token
    /// distribution is uniform over the vocabulary.
    pub fn uniform(config: ModelConfig) -> Result<Self> {
        let mut m = Self::new(config)?;
        let (w, b) = (m.layout.head_w, m.layout.head_b);
        let end = b + m.config.vocab_size;
        m.params[w..end].fill(0.0);
        Ok(m)
    }

    pub(crate) fn from_parts(config: ModelConfig, params: Vec<f32>, adapters: Option<AdapterSet>) -> Result<Self> {
        config.validate()?;
        let layout = Layout::new(&config);
        if params.len() != layout.total {
            return Err(Error::ShapeMismatch(format!(
                "model params have {} values, layout needs {}",
                params.len(),
                layout.total
            )));
        }
        Ok(LanguageModel { config, layout, params, adapters })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn vocab(&self) -> Vocab {
        Vocab { size: self.config.vocab_size, ..Vocab::BYTES }
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn params(&self) -> &[f32] {
        &self.params
    }

    pub(crate) fn params_mut(&mut self) -> &mut [f32] {
        &mut self.params
    }

    pub fn tensor(&self, name: &str) -> Option<&[f32]> {
        self.layout.tensor(name).map(|t| &self.params[t.range()])
    }

    pub fn tensor_mut(&mut self, name: &str) -> Option<&mut [f32]> {
        let range = self.layout.tensor(name)?.range();
        Some(&mut self.params[range])
    }

    pub fn adapters(&self) -> Option<&AdapterSet> {
        self.adapters.as_ref()
    }

    pub(crate) fn adapters_mut(&mut self) -> Option<&mut AdapterSet> {
        self.adapters.as_mut()
    }

    /// Attach fresh adapters. Fails if adapters are already attached.
    pub fn attach_adapters(&mut self, config: AdapterConfig, seed: u64) -> Result<()> {
        if self.adapters.is_some() {
            return Err(Error::config("model already has adapters attached"));
        }
        self.adapters = Some(AdapterSet::new(&self.config, config, seed)?);
        Ok(())
    }

    pub fn detach_adapters(&mut self) -> Option<AdapterSet> {
        self.adapters.take()
    }

    pub fn is_finite(&self) -> bool {
        self.params.iter().all(|p| p.is_finite())
            && self.adapters.as_ref().is_none_or(|a| a.params.iter().all(|p| p.is_finite()))
    }

    /// Tokenize with this model's vocabulary and context length.
    pub fn encode(&self, text: &[u8]) -> TokenSeq {
        encode(text, &self.vocab(), self.config.context_len).seq
    }

    pub fn same_shape(&self, other: &LanguageModel) -> bool {
        self.config.vocab_size == other.config.vocab_size
            && self.config.context_len == other.config.context_len
            && self.layout.total == other.layout.total
    }

    pub(crate) fn check_seq(&self, seq: &TokenSeq) -> Result<()> {
        if seq.len() < 2 {
            return Err(Error::InsufficientTokens { len: seq.len() });
        }
        if seq.len() > self.config.context_len {
            return Err(Error::SequenceTooLong { len: seq.len(), max: self.config.context_len });
        }
        if let Some(&bad) = seq.ids().iter().find(|&&id| id as usize >= self.config.vocab_size) {
            return Err(Error::config(format!("token id {bad} outside vocabulary")));
        }
        Ok(())
    }

    /// Run `f` with a network view at precision `F`.
    pub(crate) fn with_net<F: Scalar, R>(&self, f: impl FnOnce(&Net<'_, F>) -> R) -> R {
        let base = F::load(&self.params);
        let adapter_w = self.adapters.as_ref().map(|a| F::load(&a.params));
        let adapters = self.adapters.as_ref().zip(adapter_w.as_deref()).map(|(a, w)| AdapterView {
            layout: &a.layout,
            weights: w,
            rank: a.config.rank,
            scale: F::of(a.config.scale()),
        });
        let net = Net { cfg: &self.config, layout: &self.layout, weights: &base, adapters };
        f(&net)
    }

    /// `out[i] = log p(seq[i+1] | seq[..=i])`, natural log.
    pub fn token_logprobs(&self, seq: &TokenSeq) -> Result<Vec<f64>> {
        self.check_seq(seq)?;
        let v = self.config.vocab_size;
        let ids = seq.ids();
        let mut logits = self.with_net::<f64, _>(|net| net.forward(&ids[..ids.len() - 1], false).0);
        Ok(logits
            .chunks_exact_mut(v)
            .zip(&ids[1..])
            .map(|(row, &tgt)| {
                log_softmax_inplace(row);
                row[tgt as usize]
            })
            .collect())
    }

    /// Full next-token log-distribution after every prefix `seq[..=i]`.
    pub fn next_token_logprobs(&self, seq: &TokenSeq) -> Result<Vec<Vec<f64>>> {
        self.check_seq(seq)?;
        let v = self.config.vocab_size;
        let ids = seq.ids();
        let mut logits = self.with_net::<f64, _>(|net| net.forward(&ids[..ids.len() - 1], false).0);
        Ok(logits
            .chunks_exact_mut(v)
            .map(|row| {
                log_softmax_inplace(row);
                row.to_vec()
            })
            .collect())
    }

    /// Mean next-token negative log-likelihood of `seq`, in `f64`.
    pub fn loss(&self, seq: &TokenSeq) -> Result<f64> {
        self.check_seq(seq)?;
        Ok(self.with_net::<f64, _>(|net| net.loss(seq.ids())))
    }

    /// Loss and its gradient in `f64` with respect to every trainable
    /// parameter: the base vector followed by the adapter vector if any.
    pub fn loss_and_gradient(&self, seq: &TokenSeq) -> Result<(f64, Gradient)> {
        self.check_seq(seq)?;
        let with_adapters = self.adapters.is_some();
        let (loss, g) = self.with_net::<f64, _>(|net| net.loss_and_grad(seq.ids(), true, with_adapters));
        Ok((loss, Gradient { layout: self.layout.clone(), base: g.base.unwrap_or_default(), adapter: g.adapter }))
    }
}

/// Gradient of the sequence loss, addressable by tensor name.
#[derive(Debug, Clone)]
pub struct Gradient {
    layout: Layout,
    pub base: Vec<f64>,
    pub adapter: Option<Vec<f64>>,
}

impl Gradient {
    pub fn tensor(&self, name: &str) -> Option<&[f64]> {
        self.layout.tensor(name).map(|t| &self.base[t.range()])
    }
}
