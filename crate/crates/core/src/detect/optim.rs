use serde::{Deserialize, Serialize};

use crate::autodiff::Parameter;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScheduleConfig {
    pub lr_max: f64,
    pub total_steps: usize,
}

impl ScheduleConfig {
    pub fn new(lr_max: f64, total_steps: usize) -> Result<Self> {
        if !(lr_max > 0.0) || !lr_max.is_finite() || total_steps == 0 {
            return Err(Error::invalid("schedule", format!("lr_max {lr_max}, total_steps {total_steps}")));
        }
        Ok(ScheduleConfig { lr_max, total_steps })
    }
}

/// Linear decay from `lr_max` at step 0 to 0 at `total_steps`.
pub fn lr_at(s: &ScheduleConfig, step: usize) -> f64 {
    (s.lr_max * (1.0 - step as f64 / s.total_steps as f64)).max(0.0)
}

/// Adam with bias correction.
#[derive(Clone, Debug)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(params: &[&Parameter]) -> Self {
        Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: params.iter().map(|p| vec![0.0; p.numel()]).collect(),
            v: params.iter().map(|p| vec![0.0; p.numel()]).collect(),
        }
    }

    /// Update `params` from their accumulated gradients; `grads` may
    /// override them (same order).
    pub fn step_with(&mut self, params: &[&Parameter], grads: &[Vec<f64>], lr: f64) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != params.len() {
            return Err(Error::invalid("adam", "parameter list changed since construction"));
        }
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step as i32);
        let c2 = 1.0 - self.beta2.powi(self.step as i32);
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if !p.is_trainable() {
                continue;
            }
            if g.len() != self.m[i].len() {
                return Err(Error::invalid("adam", format!("{} changed shape", p.name())));
            }
            let mut data = p.value().to_vec();
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            for j in 0..data.len() {
                m[j] = self.beta1 * m[j] + (1.0 - self.beta1) * g[j];
                v[j] = self.beta2 * v[j] + (1.0 - self.beta2) * g[j] * g[j];
                let mh = m[j] / c1;
                let vh = v[j] / c2;
                data[j] -= lr * mh / (vh.sqrt() + self.eps);
            }
            p.set_data(data)?;
        }
        Ok(())
    }

    pub fn step(&mut self, params: &[&Parameter], lr: f64) -> Result<()> {
        let grads: Vec<Vec<f64>> = params.iter().map(|p| p.grad()).collect();
        self.step_with(params, &grads, lr)
    }
}

/// Scale `grads` so their joint L2 norm is at most `max_norm`; returns the
/// norm before clipping.
pub fn clip_grad_norm(grads: &mut [Vec<f64>], max_norm: f64) -> f64 {
    let norm = grads.iter().flatten().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm && norm > 0.0 {
        let s = max_norm / norm;
        grads.iter_mut().flatten().for_each(|g| *g *= s);
    }
    norm
}
