//! Central finite-difference check of the analytic gradient.

use alloc::vec::Vec;

use super::model::LanguageModel;
use super::transformer::{AdapterView, Net};
use super::vocab::TokenSeq;
use crate::error::Result;
use crate::math::Scalar;
use crate::rng;

/// Denominator floor of the relative error, so parameters whose true
/// gradient is zero are compared in absolute terms.
pub const REL_ERROR_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckOptions {
    /// Number of parameters to probe. Spread evenly over all tensors.
    pub samples: usize,
    pub step: f64,
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions { samples: 256, step: 1e-4, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub checked: usize,
    /// Name of the tensor holding the worst parameter, if any was checked.
    pub worst: Option<alloc::string::String>,
}

/// Max relative error between the analytic gradient and
/// `(L(θ+h) − L(θ−h)) / 2h` on a sampled subset of parameters.
pub fn grad_check(model: &LanguageModel, seq: &TokenSeq, opts: &GradCheckOptions) -> Result<GradCheckReport> {
    model.check_seq(seq)?;
    let (_, grad) = model.loss_and_gradient(seq)?;

    // (tensor name, flat index into base ++ adapter)
    let base_len = model.params().len();
    let mut tensors: Vec<(&str, core::ops::Range<usize>)> =
        model.layout().tensors.iter().map(|t| (t.name.as_str(), t.range())).collect();
    if let Some(a) = model.adapters() {
        tensors.extend(a.tensors().iter().map(|t| (t.name.as_str(), base_len + t.offset..base_len + t.offset + t.numel())));
    }
    let analytic: Vec<f64> = grad.base.iter().chain(grad.adapter.iter().flatten()).copied().collect();

    let mut rng = rng::seeded(opts.seed);
    let mut picks: Vec<(usize, usize)> = Vec::with_capacity(opts.samples);
    if opts.samples > 0 {
        let per = opts.samples.div_ceil(tensors.len());
        'outer: for (ti, (_, range)) in tensors.iter().enumerate() {
            for _ in 0..per.min(range.len()) {
                if picks.len() == opts.samples {
                    break 'outer;
                }
                picks.push((ti, range.start + rng::index(&mut rng, range.len())));
            }
        }
    }

    let mut base = f64::load(model.params()).into_owned();
    let mut adapter = model.adapters().map(|a| f64::load(a.params()).into_owned());
    let loss_at = |base: &[f64], adapter: Option<&[f64]>| {
        let view = model.adapters().zip(adapter).map(|(a, w)| AdapterView {
            layout: a.layout(),
            weights: w,
            rank: a.config().rank,
            scale: a.config().scale(),
        });
        let net = Net { cfg: model.config(), layout: model.layout(), weights: base, adapters: view };
        net.loss(seq.ids())
    };

    let h = opts.step;
    let mut report = GradCheckReport { max_rel_error: 0.0, checked: picks.len(), worst: None };
    for (ti, idx) in picks {
        let nudge = |base: &mut Vec<f64>, adapter: &mut Option<Vec<f64>>, delta: f64| {
            if idx < base_len {
                base[idx] += delta;
            } else {
                adapter.as_mut().expect("adapter index")[idx - base_len] += delta;
            }
        };
        let orig = if idx < base_len { base[idx] } else { adapter.as_ref().unwrap()[idx - base_len] };
        nudge(&mut base, &mut adapter, h);
        let plus = loss_at(&base, adapter.as_deref());
        nudge(&mut base, &mut adapter, -2.0 * h);
        let minus = loss_at(&base, adapter.as_deref());
        if idx < base_len {
            base[idx] = orig;
        } else {
            adapter.as_mut().unwrap()[idx - base_len] = orig;
        }
        let numeric = (plus - minus) / (2.0 * h);
        let a = analytic[idx];
        let rel = libm::fabs(a - numeric) / libm::fabs(a).max(libm::fabs(numeric)).max(REL_ERROR_FLOOR);
        if report.worst.is_none() || rel > report.max_rel_error {
            report.max_rel_error = rel;
            report.worst = Some(tensors[ti].0.into());
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lm::{AdapterConfig, AdapterTarget, ModelConfig};

    fn tiny() -> ModelConfig {
        ModelConfig {
            vocab_size: 259,
            context_len: 24,
            embed_dim: 16,
            num_layers: 2,
            num_heads: 2,
            feedforward_dim: 32,
            seed: 5,
        }
    }

    #[test]
    fn empty_subset_is_zero() {
        let m = LanguageModel::new(tiny()).unwrap();
        let seq = m.encode(b"abc");
        let r = grad_check(&m, &seq, &GradCheckOptions { samples: 0, ..Default::default() }).unwrap();
        assert_eq!(r.max_rel_error, 0.0);
        assert_eq!(r.checked, 0);
    }

    #[test]
    fn adapter_gradients_check_out() {
        let mut m = LanguageModel::new(tiny()).unwrap();
        let mut cfg = AdapterConfig { rank: 2, targets: AdapterTarget::ALL.to_vec(), ..Default::default() };
        cfg.init_std = 0.3;
        m.attach_adapters(cfg, 9).unwrap();
        // non-zero B so gradients reach A
        for p in m.adapters_mut().unwrap().params_mut().iter_mut() {
            if *p == 0.0 {
                *p = 0.05;
            }
        }
        let seq = m.encode(b"In 2014, a meeting was held.");
        let r = grad_check(&m, &seq, &GradCheckOptions { samples: 300, ..Default::default() }).unwrap();
        assert!(r.max_rel_error < 1e-3, "{r:?}");
    }
}
