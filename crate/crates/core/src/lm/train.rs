//! Next-token training loops: full pretraining and adapter fine-tuning.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::config::{AdapterConfig, TrainConfig};
use super::model::LanguageModel;
use super::optim::{clip_grad_norm, cosine_lr, Adam};
use super::vocab::TokenSeq;
use crate::error::{Error, Result};
use crate::math::Scalar;
use crate::{par, rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean per-sequence loss of each epoch, in corpus order.
    pub loss_history: Vec<f64>,
    pub steps: usize,
}

/// How [`finetune`] adapts the base model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FinetuneMode {
    /// Train fresh low-rank adapters; base weights stay frozen.
    Lora(AdapterConfig),
    /// Update every base parameter.
    Full,
}

impl Default for FinetuneMode {
    fn default() -> Self {
        FinetuneMode::Lora(AdapterConfig::default())
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Group {
    Base,
    Adapter,
}

/// Minimise the mean next-token NLL over `corpus`, updating every base
/// parameter. On error `model` is left untouched.
pub fn train(model: &mut LanguageModel, corpus: &[TokenSeq], cfg: &TrainConfig) -> Result<TrainReport> {
    if model.adapters().is_some() {
        return Err(Error::config("train() updates base weights; detach adapters or use finetune()"));
    }
    let mut work = model.clone();
    let report = optimize(&mut work, corpus, cfg, Group::Base)?;
    *model = work;
    Ok(report)
}

/// Fine-tune a copy of `model` on `ft_set`. With `epochs == 0` the copy is
/// returned unoptimised (adapters attached at their identity init).
pub fn finetune(
    model: &LanguageModel,
    ft_set: &[TokenSeq],
    mode: &FinetuneMode,
    cfg: &TrainConfig,
) -> Result<LanguageModel> {
    if model.adapters().is_some() {
        return Err(Error::config("finetune() expects a model without adapters"));
    }
    if ft_set.is_empty() {
        return Err(Error::EmptyFinetuneSet("no sequences to fine-tune on".into()));
    }
    let mut tuned = model.clone();
    let group = match mode {
        FinetuneMode::Lora(acfg) => {
            tuned.attach_adapters(acfg.clone(), cfg.seed ^ 0x5eed_ada9)?;
            Group::Adapter
        }
        FinetuneMode::Full => Group::Base,
    };
    if cfg.epochs == 0 {
        return Ok(tuned);
    }
    optimize(&mut tuned, ft_set, cfg, group)?;
    Ok(tuned)
}

fn optimize(model: &mut LanguageModel, corpus: &[TokenSeq], cfg: &TrainConfig, group: Group) -> Result<TrainReport> {
    cfg.validate()?;
    if corpus.is_empty() {
        return Err(Error::config("training corpus is empty"));
    }
    for seq in corpus {
        model.check_seq(seq)?;
    }

    let n_params = match group {
        Group::Base => model.params().len(),
        Group::Adapter => model.adapters().map(|a| a.params().len()).unwrap_or(0),
    };
    let mut opt = Adam::new(n_params, cfg);
    let steps_per_epoch = corpus.len().div_ceil(cfg.batch_size);
    let total_steps = steps_per_epoch * cfg.epochs;
    let mut rng = rng::seeded(cfg.seed);
    let mut order: Vec<usize> = (0..corpus.len()).collect();
    let mut seq_loss = vec![0.0f64; corpus.len()];
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut step = 0usize;

    for _epoch in 0..cfg.epochs {
        rng::shuffle(&mut rng, &mut order);
        for batch in order.chunks(cfg.batch_size) {
            let results = model.with_net::<f32, _>(|net| {
                par::map(batch, |&i| net.loss_and_grad(corpus[i].ids(), group == Group::Base, group == Group::Adapter))
            });
            let mut grad = vec![0.0f64; n_params];
            let inv = 1.0 / batch.len() as f64;
            for (&i, (loss, g)) in batch.iter().zip(results) {
                if !loss.is_finite() {
                    return Err(Error::Diverged { step, loss });
                }
                seq_loss[i] = loss;
                let g = match group {
                    Group::Base => g.base,
                    Group::Adapter => g.adapter,
                }
                .expect("gradient for trained group");
                for (acc, &x) in grad.iter_mut().zip(&g) {
                    *acc += x.to_f64() * inv;
                }
            }
            clip_grad_norm(&mut grad, cfg.clip_norm);
            let lr = cosine_lr(cfg.learning_rate, step, total_steps);
            let params = match group {
                Group::Base => model.params_mut(),
                Group::Adapter => model.adapters_mut().expect("adapters attached").params_mut(),
            };
            opt.step(params, &grad, lr);
            step += 1;
        }
        let mean = seq_loss.iter().sum::<f64>() / corpus.len() as f64;
        if !mean.is_finite() || !model.is_finite() {
            return Err(Error::Diverged { step, loss: mean });
        }
        history.push(mean);
    }
    Ok(TrainReport { loss_history: history, steps: step })
}
