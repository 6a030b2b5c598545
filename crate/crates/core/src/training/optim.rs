use std::collections::BTreeMap;
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::model::DecoderModel;
use crate::tensor::Tensor;

/// Learning rate at 1-based `step`: linear warmup to `peak` over
/// `warmup` steps, then cosine decay to zero at `max_steps`.
pub fn learning_rate(step: usize, peak: f64, warmup: usize, max_steps: usize) -> f64 {
    if step <= warmup {
        return peak * step as f64 / warmup as f64;
    }
    let span = max_steps.saturating_sub(warmup).max(1) as f64;
    let progress = ((step - warmup) as f64 / span).min(1.0);
    0.5 * peak * (1.0 + (PI * progress).cos())
}

/// Global L2 norm over all gradients.
pub fn grad_norm(grads: &BTreeMap<String, Tensor>) -> f64 {
    grads
        .values()
        .flat_map(|g| g.data())
        .map(|&x| f64::from(x) * f64::from(x))
        .sum::<f64>()
        .sqrt()
}

/// Rescales gradients so their global norm is at most `max_norm`; returns
/// the norm before clipping.
pub fn clip_grad_norm(grads: &mut BTreeMap<String, Tensor>, max_norm: f64) -> f64 {
    let norm = grad_norm(grads);
    if norm > max_norm && norm > 0.0 {
        let c = (max_norm / norm) as f32;
        for g in grads.values_mut() {
            for x in g.data_mut() {
                *x *= c;
            }
        }
    }
    norm
}

/// Adam with bias correction.
#[derive(Clone, Debug)]
pub struct Adam {
    beta1: f64,
    beta2: f64,
    eps: f64,
    t: i32,
    m: BTreeMap<String, Vec<f32>>,
    v: BTreeMap<String, Vec<f32>>,
}

impl Default for Adam {
    fn default() -> Self {
        Self::new(0.9, 0.999, 1e-8)
    }
}

impl Adam {
    pub fn new(beta1: f64, beta2: f64, eps: f64) -> Self {
        Self {
            beta1,
            beta2,
            eps,
            t: 0,
            m: BTreeMap::new(),
            v: BTreeMap::new(),
        }
    }

    pub fn step(&mut self, model: &mut DecoderModel, grads: &BTreeMap<String, Tensor>, lr: f64) -> Result<()> {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t);
        let bc2 = 1.0 - self.beta2.powi(self.t);
        let (b1, b2) = (self.beta1 as f32, self.beta2 as f32);
        for (name, g) in grads {
            let p = model
                .param_mut(name)
                .ok_or_else(|| Error::invalid(format!("gradient for unknown parameter `{name}`")))?;
            let n = g.numel();
            let m = self.m.entry(name.clone()).or_insert_with(|| vec![0.0; n]);
            let v = self.v.entry(name.clone()).or_insert_with(|| vec![0.0; n]);
            for (i, (w, &gi)) in p.data_mut().iter_mut().zip(g.data()).enumerate() {
                m[i] = b1 * m[i] + (1.0 - b1) * gi;
                v[i] = b2 * v[i] + (1.0 - b2) * gi * gi;
                let m_hat = f64::from(m[i]) / bc1;
                let v_hat = f64::from(v[i]) / bc2;
                *w -= (lr * m_hat / (v_hat.sqrt() + self.eps)) as f32;
            }
        }
        Ok(())
    }
}
