//! Adam with bias correction, cosine learning-rate decay and global-norm
//! gradient clipping.

use alloc::vec;
use alloc::vec::Vec;

use super::config::TrainConfig;

pub struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
    beta1: f64,
    beta2: f64,
    eps: f64,
}

impl Adam {
    pub fn new(len: usize, cfg: &TrainConfig) -> Self {
        Adam { m: vec![0.0; len], v: vec![0.0; len], t: 0, beta1: cfg.beta1, beta2: cfg.beta2, eps: cfg.eps }
    }

    pub fn step(&mut self, params: &mut [f32], grad: &[f64], lr: f64) {
        debug_assert_eq!(params.len(), grad.len());
        self.t += 1;
        let bc1 = 1.0 - libm::pow(self.beta1, self.t as f64);
        let bc2 = 1.0 - libm::pow(self.beta2, self.t as f64);
        for (((p, &g), m), v) in params.iter_mut().zip(grad).zip(&mut self.m).zip(&mut self.v) {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            let update = lr * (*m / bc1) / (libm::sqrt(*v / bc2) + self.eps);
            *p = (*p as f64 - update) as f32;
        }
    }
}

/// Learning rate at `step` of `total`: `lr0 · ½(1 + cos(π·step/total))`.
pub fn cosine_lr(lr0: f64, step: usize, total: usize) -> f64 {
    if total == 0 {
        return lr0;
    }
    lr0 * 0.5 * (1.0 + libm::cos(core::f64::consts::PI * step as f64 / total as f64))
}

/// Rescale `grad` so its L2 norm is at most `max_norm`; returns the norm
/// before clipping.
pub fn clip_grad_norm(grad: &mut [f64], max_norm: f64) -> f64 {
    let norm = libm::sqrt(grad.iter().map(|g| g * g).sum::<f64>());
    if norm > max_norm {
        let s = max_norm / norm;
        for g in grad.iter_mut() {
            *g *= s;
        }
    }
    norm
}
