//! Named tensors inside the flat parameter vectors.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::config::{AdapterConfig, AdapterTarget, ModelConfig};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorSpec {
    pub name: String,
    pub shape: Vec<usize>,
    #[serde(skip)]
    pub offset: usize,
}

impl TensorSpec {
    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn range(&self) -> core::ops::Range<usize> {
        self.offset..self.offset + self.numel()
    }
}

#[derive(Default)]
struct Builder {
    tensors: Vec<TensorSpec>,
    total: usize,
}

impl Builder {
    fn push(&mut self, name: String, shape: &[usize]) -> usize {
        let offset = self.total;
        let spec = TensorSpec { name, shape: shape.to_vec(), offset };
        self.total += spec.numel();
        self.tensors.push(spec);
        offset
    }
}

/// Offsets of one decoder block. LayerNorm gain and bias are adjacent.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockOffsets {
    pub ln1: usize,
    pub wq: usize,
    pub bq: usize,
    pub wk: usize,
    pub bk: usize,
    pub wv: usize,
    pub bv: usize,
    pub wo: usize,
    pub bo: usize,
    pub ln2: usize,
    pub w_up: usize,
    pub b_up: usize,
    pub w_down: usize,
    pub b_down: usize,
}

impl BlockOffsets {
    /// Weight and bias offsets of an attention projection.
    pub fn projection(&self, target: AdapterTarget) -> (usize, usize) {
        match target {
            AdapterTarget::Query => (self.wq, self.bq),
            AdapterTarget::Key => (self.wk, self.bk),
            AdapterTarget::Value => (self.wv, self.bv),
            AdapterTarget::Output => (self.wo, self.bo),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    pub tensors: Vec<TensorSpec>,
    pub total: usize,
    pub tok_emb: usize,
    pub pos_emb: usize,
    pub blocks: Vec<BlockOffsets>,
    pub ln_f: usize,
    pub head_w: usize,
    pub head_b: usize,
}

impl Layout {
    pub fn new(cfg: &ModelConfig) -> Layout {
        let (v, c, d, f) = (cfg.vocab_size, cfg.context_len, cfg.embed_dim, cfg.feedforward_dim);
        let mut b = Builder::default();
        let tok_emb = b.push("tok_emb".into(), &[v, d]);
        let pos_emb = b.push("pos_emb".into(), &[c, d]);
        let mut blocks = Vec::with_capacity(cfg.num_layers);
        for l in 0..cfg.num_layers {
            let p = |s: &str| format!("blocks.{l}.{s}");
            let ln1 = b.push(p("ln1"), &[2, d]);
            let wq = b.push(p("attn.q.weight"), &[d, d]);
            let bq = b.push(p("attn.q.bias"), &[d]);
            let wk = b.push(p("attn.k.weight"), &[d, d]);
            let bk = b.push(p("attn.k.bias"), &[d]);
            let wv = b.push(p("attn.v.weight"), &[d, d]);
            let bv = b.push(p("attn.v.bias"), &[d]);
            let wo = b.push(p("attn.o.weight"), &[d, d]);
            let bo = b.push(p("attn.o.bias"), &[d]);
            let ln2 = b.push(p("ln2"), &[2, d]);
            let w_up = b.push(p("mlp.up.weight"), &[d, f]);
            let b_up = b.push(p("mlp.up.bias"), &[f]);
            let w_down = b.push(p("mlp.down.weight"), &[f, d]);
            let b_down = b.push(p("mlp.down.bias"), &[d]);
            blocks.push(BlockOffsets { ln1, wq, bq, wk, bk, wv, bv, wo, bo, ln2, w_up, b_up, w_down, b_down });
        }
        let ln_f = b.push("ln_f".into(), &[2, d]);
        let head_w = b.push("head.weight".into(), &[d, v]);
        let head_b = b.push("head.bias".into(), &[v]);
        Layout { tensors: b.tensors, total: b.total, tok_emb, pos_emb, blocks, ln_f, head_w, head_b }
    }

    pub fn tensor(&self, name: &str) -> Option<&TensorSpec> {
        self.tensors.iter().find(|t| t.name == name)
    }
}

/// Offsets of one adapter pair. `a` is `[in, rank]`, `b` is `[rank, out]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AdapterSlot {
    pub a: usize,
    pub b: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AdapterLayout {
    pub tensors: Vec<TensorSpec>,
    pub total: usize,
    /// `slots[layer][target.index()]`
    pub slots: Vec<[Option<AdapterSlot>; 4]>,
}

impl AdapterLayout {
    pub fn new(model: &ModelConfig, cfg: &AdapterConfig) -> AdapterLayout {
        let (d, r) = (model.embed_dim, cfg.rank);
        let targets = cfg.sorted_targets();
        let mut b = Builder::default();
        let mut slots = Vec::with_capacity(model.num_layers);
        for l in 0..model.num_layers {
            let mut row = [None; 4];
            for &t in &targets {
                let a = b.push(format!("blocks.{l}.attn.{}.lora_a", t.name()), &[d, r]);
                let bb = b.push(format!("blocks.{l}.attn.{}.lora_b", t.name()), &[r, d]);
                row[t.index()] = Some(AdapterSlot { a, b: bb });
            }
            slots.push(row);
        }
        AdapterLayout { tensors: b.tensors, total: b.total, slots }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tensors_tile_the_flat_vector() {
        let cfg = ModelConfig::default();
        let layout = Layout::new(&cfg);
        let mut next = 0;
        for t in &layout.tensors {
            assert_eq!(t.offset, next, "{}", t.name);
            next += t.numel();
        }
        assert_eq!(next, layout.total);
        assert_eq!(layout.tensor("head.bias").unwrap().shape, [259]);
    }

    #[test]
    fn adapter_slots_follow_targets() {
        let cfg = ModelConfig::default();
        let a = AdapterLayout::new(&cfg, &AdapterConfig::default());
        assert_eq!(a.tensors.len(), 2 * 2 * cfg.num_layers);
        assert!(a.slots[0][AdapterTarget::Query.index()].is_some());
        assert!(a.slots[0][AdapterTarget::Key.index()].is_none());
        assert_eq!(a.total, cfg.num_layers * 2 * 2 * cfg.embed_dim * 8);
    }
}
