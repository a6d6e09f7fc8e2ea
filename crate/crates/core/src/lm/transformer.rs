//! Forward and backward passes of the pre-norm decoder.
//!
//! One sequence at a time; the input is `seq[..n-1]` and the targets are
//! `seq[1..]`, so the first content byte is predicted from BOS alone.

use alloc::vec;
use alloc::vec::Vec;

use super::config::{AdapterTarget, ModelConfig};
use super::layout::{AdapterLayout, AdapterSlot, BlockOffsets, Layout};
use super::vocab::TokenId;
use crate::math::{
    axpy, bias_grad, dot, gelu, gelu_grad, layer_norm, layer_norm_backward, linear, linear_dw, linear_dx,
    log_softmax_inplace, NormCache, Scalar,
};

pub(crate) struct AdapterView<'a, F> {
    pub layout: &'a AdapterLayout,
    pub weights: &'a [F],
    pub rank: usize,
    pub scale: F,
}

pub(crate) struct Net<'a, F> {
    pub cfg: &'a ModelConfig,
    pub layout: &'a Layout,
    pub weights: &'a [F],
    pub adapters: Option<AdapterView<'a, F>>,
}

struct Projection<F> {
    out: Vec<F>,
    /// `x · A` when an adapter is attached.
    low: Option<Vec<F>>,
}

struct BlockCache<F> {
    h1: Vec<F>,
    n1: NormCache<F>,
    q: Projection<F>,
    k: Projection<F>,
    v: Projection<F>,
    probs: Vec<F>,
    attn: Vec<F>,
    o_low: Option<Vec<F>>,
    h2: Vec<F>,
    n2: NormCache<F>,
    up: Vec<F>,
    act: Vec<F>,
}

pub(crate) struct Trace<F> {
    blocks: Vec<BlockCache<F>>,
    hf: Vec<F>,
    nf: NormCache<F>,
}

/// Gradient buffers; `None` means that group is frozen.
pub(crate) struct Grads<F> {
    pub base: Option<Vec<F>>,
    pub adapter: Option<Vec<F>>,
}

impl<'a, F: Scalar> Net<'a, F> {
    fn w(&self, off: usize, len: usize) -> &[F] {
        &self.weights[off..off + len]
    }

    fn slot(&self, layer: usize, target: AdapterTarget) -> Option<(AdapterSlot, &AdapterView<'a, F>)> {
        let view = self.adapters.as_ref()?;
        view.layout.slots[layer][target.index()].map(|s| (s, view))
    }

    fn project(&self, x: &[F], layer: usize, target: AdapterTarget) -> Projection<F> {
        let d = self.cfg.embed_dim;
        let (wo, bo) = self.layout.blocks[layer].projection(target);
        let mut out = linear(x, self.w(wo, d * d), Some(self.w(bo, d)), d, d);
        let low = self.slot(layer, target).map(|(slot, view)| {
            let r = view.rank;
            let low = linear(x, &view.weights[slot.a..slot.a + d * r], None, d, r);
            let delta = linear(&low, &view.weights[slot.b..slot.b + r * d], None, r, d);
            axpy(&mut out, view.scale, &delta);
            low
        });
        Projection { out, low }
    }

    /// Returns logits `[T, V]` and, when `keep` is set, the activations
    /// needed by [`Net::backward`].
    pub fn forward(&self, inputs: &[TokenId], keep: bool) -> (Vec<F>, Option<Trace<F>>) {
        let cfg = self.cfg;
        let (d, t_len, f, v) = (cfg.embed_dim, inputs.len(), cfg.feedforward_dim, cfg.vocab_size);
        let lay = self.layout;

        let mut x = vec![F::ZERO; t_len * d];
        for (t, &tok) in inputs.iter().enumerate() {
            let row = &mut x[t * d..(t + 1) * d];
            row.copy_from_slice(self.w(lay.tok_emb + tok as usize * d, d));
            for (r, &p) in row.iter_mut().zip(self.w(lay.pos_emb + t * d, d)) {
                *r += p;
            }
        }

        let mut blocks = Vec::new();
        for (l, b) in lay.blocks.iter().enumerate() {
            let (h1, n1) = layer_norm(&x, self.w(b.ln1, d), self.w(b.ln1 + d, d), d);
            let q = self.project(&h1, l, AdapterTarget::Query);
            let k = self.project(&h1, l, AdapterTarget::Key);
            let vp = self.project(&h1, l, AdapterTarget::Value);
            let (attn, probs) = self.attention(&q.out, &k.out, &vp.out, t_len);
            let o = self.project(&attn, l, AdapterTarget::Output);
            for (xi, &oi) in x.iter_mut().zip(&o.out) {
                *xi += oi;
            }
            let (h2, n2) = layer_norm(&x, self.w(b.ln2, d), self.w(b.ln2 + d, d), d);
            let up = linear(&h2, self.w(b.w_up, d * f), Some(self.w(b.b_up, f)), d, f);
            let act: Vec<F> = up.iter().map(|&u| gelu(u)).collect();
            let down = linear(&act, self.w(b.w_down, f * d), Some(self.w(b.b_down, d)), f, d);
            for (xi, &di) in x.iter_mut().zip(&down) {
                *xi += di;
            }
            if keep {
                blocks.push(BlockCache {
                    h1,
                    n1,
                    q,
                    k,
                    v: vp,
                    probs,
                    attn,
                    o_low: o.low,
                    h2,
                    n2,
                    up,
                    act,
                });
            }
        }

        let (hf, nf) = layer_norm(&x, self.w(lay.ln_f, d), self.w(lay.ln_f + d, d), d);
        let logits = linear(&hf, self.w(lay.head_w, d * v), Some(self.w(lay.head_b, v)), d, v);
        let trace = keep.then_some(Trace { blocks, hf, nf });
        (logits, trace)
    }

    /// Causal multi-head attention. Returns the head outputs `[T, D]` and the
    /// attention probabilities `[H, T, T]` (upper triangle left at zero).
    fn attention(&self, q: &[F], k: &[F], v: &[F], t_len: usize) -> (Vec<F>, Vec<F>) {
        let d = self.cfg.embed_dim;
        let hd = self.cfg.head_dim();
        let inv = F::of(1.0 / (hd as f64).sqrt());
        let mut out = vec![F::ZERO; t_len * d];
        let mut probs = vec![F::ZERO; self.cfg.num_heads * t_len * t_len];
        for h in 0..self.cfg.num_heads {
            let c = h * hd;
            for t in 0..t_len {
                let qt = &q[t * d + c..t * d + c + hd];
                let row = &mut probs[(h * t_len + t) * t_len..(h * t_len + t) * t_len + t + 1];
                let mut max = F::ZERO;
                for (u, p) in row.iter_mut().enumerate() {
                    *p = dot(qt, &k[u * d + c..u * d + c + hd]) * inv;
                    if u == 0 || *p > max {
                        max = *p;
                    }
                }
                let mut sum = F::ZERO;
                for p in row.iter_mut() {
                    *p = (*p - max).exp();
                    sum += *p;
                }
                let norm = F::ONE / sum;
                let ot = &mut out[t * d + c..t * d + c + hd];
                for (u, p) in row.iter_mut().enumerate() {
                    *p *= norm;
                    axpy(ot, *p, &v[u * d + c..u * d + c + hd]);
                }
            }
        }
        (out, probs)
    }

    /// Mean next-token negative log-likelihood over the sequence.
    pub fn loss(&self, seq: &[TokenId]) -> f64 {
        let (logits, _) = self.forward(&seq[..seq.len() - 1], false);
        nll(logits, &seq[1..], self.cfg.vocab_size).0
    }

    /// Loss and gradients of the mean next-token NLL. Frozen groups get no
    /// buffer; the backward pass still flows through them.
    pub fn loss_and_grad(&self, seq: &[TokenId], base: bool, adapter: bool) -> (f64, Grads<F>) {
        let inputs = &seq[..seq.len() - 1];
        let (logits, trace) = self.forward(inputs, true);
        let (loss, dlogits) = nll(logits, &seq[1..], self.cfg.vocab_size);
        let mut grads = Grads {
            base: base.then(|| vec![F::ZERO; self.layout.total]),
            adapter: match (&self.adapters, adapter) {
                (Some(a), true) => Some(vec![F::ZERO; a.layout.total]),
                _ => None,
            },
        };
        self.backward(inputs, trace.expect("trace kept"), dlogits, &mut grads);
        (loss, grads)
    }

    fn project_backward(
        &self,
        x: &[F],
        proj_low: Option<&[F]>,
        dy: &[F],
        layer: usize,
        target: AdapterTarget,
        grads: &mut Grads<F>,
    ) -> Vec<F> {
        let d = self.cfg.embed_dim;
        let (wo, bo) = self.layout.blocks[layer].projection(target);
        if let Some(g) = grads.base.as_mut() {
            linear_dw(x, dy, d, d, &mut g[wo..wo + d * d]);
            bias_grad(dy, d, &mut g[bo..bo + d]);
        }
        let mut dx = linear_dx(self.w(wo, d * d), dy, d, d);
        if let Some((slot, view)) = self.slot(layer, target) {
            let r = view.rank;
            let low = proj_low.expect("adapter activations recorded");
            let sdy: Vec<F> = dy.iter().map(|&g| g * view.scale).collect();
            if let Some(g) = grads.adapter.as_mut() {
                linear_dw(low, &sdy, r, d, &mut g[slot.b..slot.b + r * d]);
            }
            let dlow = linear_dx(&view.weights[slot.b..slot.b + r * d], &sdy, r, d);
            if let Some(g) = grads.adapter.as_mut() {
                linear_dw(x, &dlow, d, r, &mut g[slot.a..slot.a + d * r]);
            }
            let extra = linear_dx(&view.weights[slot.a..slot.a + d * r], &dlow, d, r);
            for (a, &b) in dx.iter_mut().zip(&extra) {
                *a += b;
            }
        }
        dx
    }

    fn backward(&self, inputs: &[TokenId], trace: Trace<F>, dlogits: Vec<F>, grads: &mut Grads<F>) {
        let cfg = self.cfg;
        let lay = self.layout;
        let (d, f, v, t_len) = (cfg.embed_dim, cfg.feedforward_dim, cfg.vocab_size, inputs.len());

        if let Some(g) = grads.base.as_mut() {
            linear_dw(&trace.hf, &dlogits, d, v, &mut g[lay.head_w..lay.head_w + d * v]);
            bias_grad(&dlogits, v, &mut g[lay.head_b..lay.head_b + v]);
        }
        let dhf = linear_dx(self.w(lay.head_w, d * v), &dlogits, d, v);
        let mut dx = layer_norm_backward(
            &dhf,
            &trace.nf,
            self.w(lay.ln_f, d),
            d,
            grads.base.as_mut().map(|g| &mut g[lay.ln_f..lay.ln_f + 2 * d]),
        );

        for (l, cache) in trace.blocks.iter().enumerate().rev() {
            let b: &BlockOffsets = &lay.blocks[l];

            // feed-forward
            if let Some(g) = grads.base.as_mut() {
                linear_dw(&cache.act, &dx, f, d, &mut g[b.w_down..b.w_down + f * d]);
                bias_grad(&dx, d, &mut g[b.b_down..b.b_down + d]);
            }
            let mut dup = linear_dx(self.w(b.w_down, f * d), &dx, f, d);
            for (g, &u) in dup.iter_mut().zip(&cache.up) {
                *g *= gelu_grad(u);
            }
            if let Some(g) = grads.base.as_mut() {
                linear_dw(&cache.h2, &dup, d, f, &mut g[b.w_up..b.w_up + d * f]);
                bias_grad(&dup, f, &mut g[b.b_up..b.b_up + f]);
            }
            let dh2 = linear_dx(self.w(b.w_up, d * f), &dup, d, f);
            let dmid = layer_norm_backward(
                &dh2,
                &cache.n2,
                self.w(b.ln2, d),
                d,
                grads.base.as_mut().map(|g| &mut g[b.ln2..b.ln2 + 2 * d]),
            );
            for (a, &c) in dx.iter_mut().zip(&dmid) {
                *a += c;
            }

            // attention
            let dattn = self.project_backward(&cache.attn, cache.o_low.as_deref(), &dx, l, AdapterTarget::Output, grads);
            let (dq, dk, dv) = self.attention_backward(cache, &dattn, t_len);
            let mut dh1 = self.project_backward(&cache.h1, cache.q.low.as_deref(), &dq, l, AdapterTarget::Query, grads);
            let dh1k = self.project_backward(&cache.h1, cache.k.low.as_deref(), &dk, l, AdapterTarget::Key, grads);
            let dh1v = self.project_backward(&cache.h1, cache.v.low.as_deref(), &dv, l, AdapterTarget::Value, grads);
            for ((a, &bk), &bv) in dh1.iter_mut().zip(&dh1k).zip(&dh1v) {
                *a += bk + bv;
            }
            let din = layer_norm_backward(
                &dh1,
                &cache.n1,
                self.w(b.ln1, d),
                d,
                grads.base.as_mut().map(|g| &mut g[b.ln1..b.ln1 + 2 * d]),
            );
            for (a, &c) in dx.iter_mut().zip(&din) {
                *a += c;
            }
        }

        if let Some(g) = grads.base.as_mut() {
            for (t, &tok) in inputs.iter().enumerate() {
                let row = &dx[t * d..(t + 1) * d];
                let te = lay.tok_emb + tok as usize * d;
                for (a, &c) in g[te..te + d].iter_mut().zip(row) {
                    *a += c;
                }
                let pe = lay.pos_emb + t * d;
                for (a, &c) in g[pe..pe + d].iter_mut().zip(row) {
                    *a += c;
                }
            }
        }
    }

    fn attention_backward(&self, cache: &BlockCache<F>, dout: &[F], t_len: usize) -> (Vec<F>, Vec<F>, Vec<F>) {
        let d = self.cfg.embed_dim;
        let hd = self.cfg.head_dim();
        let inv = F::of(1.0 / (hd as f64).sqrt());
        let (q, k, v) = (&cache.q.out, &cache.k.out, &cache.v.out);
        let mut dq = vec![F::ZERO; t_len * d];
        let mut dk = vec![F::ZERO; t_len * d];
        let mut dv = vec![F::ZERO; t_len * d];
        let mut dp = vec![F::ZERO; t_len];
        for h in 0..self.cfg.num_heads {
            let c = h * hd;
            for t in 0..t_len {
                let p = &cache.probs[(h * t_len + t) * t_len..(h * t_len + t) * t_len + t + 1];
                let g_out = &dout[t * d + c..t * d + c + hd];
                let mut weighted = F::ZERO;
                for u in 0..=t {
                    dp[u] = dot(g_out, &v[u * d + c..u * d + c + hd]);
                    weighted += p[u] * dp[u];
                    axpy(&mut dv[u * d + c..u * d + c + hd], p[u], g_out);
                }
                for u in 0..=t {
                    let ds = p[u] * (dp[u] - weighted) * inv;
                    axpy(&mut dq[t * d + c..t * d + c + hd], ds, &k[u * d + c..u * d + c + hd]);
                    axpy(&mut dk[u * d + c..u * d + c + hd], ds, &q[t * d + c..t * d + c + hd]);
                }
            }
        }
        (dq, dk, dv)
    }
}

/// Mean NLL of `targets` and its gradient w.r.t. the logits.
fn nll<F: Scalar>(mut logits: Vec<F>, targets: &[TokenId], v: usize) -> (f64, Vec<F>) {
    let scale = F::of(1.0 / targets.len() as f64);
    let mut loss = 0.0f64;
    for (row, &tgt) in logits.chunks_exact_mut(v).zip(targets) {
        log_softmax_inplace(row);
        loss -= row[tgt as usize].to_f64();
        for x in row.iter_mut() {
            *x = x.exp() * scale;
        }
        row[tgt as usize] -= scale;
    }
    (loss / targets.len() as f64, logits)
}
