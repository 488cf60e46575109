use serde::{Deserialize, Serialize};

use super::{ParamStore, Real};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
        }
    }
}

/// Linear warmup followed by linear decay to zero.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub base_lr: f64,
    pub warmup: f64,
    pub total_steps: u64,
}

impl Schedule {
    pub fn new(base_lr: f64, warmup: f64, total_steps: u64) -> Self {
        assert!((0.0..=1.0).contains(&warmup), "warmup proportion {warmup} outside [0, 1]");
        Schedule {
            base_lr,
            warmup,
            total_steps,
        }
    }

    pub fn warmup_steps(&self) -> u64 {
        (self.warmup * self.total_steps as f64).ceil() as u64
    }
}

pub fn lr_at(s: &Schedule, t: u64) -> f64 {
    let total = s.total_steps;
    if t >= total {
        return 0.0;
    }
    let w = s.warmup_steps();
    if t < w {
        s.base_lr * t as f64 / w as f64
    } else {
        s.base_lr * (total - t) as f64 / (total - w) as f64
    }
}

/// One Adam step at learning rate `lr` with decoupled weight decay, then
/// zero the gradients.
pub fn adam_update<T: Real>(store: &mut ParamStore<T>, cfg: &AdamConfig, lr: f64) {
    let (b1, b2) = (T::c(cfg.beta1), T::c(cfg.beta2));
    let (one_b1, one_b2) = (T::c(1.0 - cfg.beta1), T::c(1.0 - cfg.beta2));
    let eps = T::c(cfg.eps);
    let decay = T::c(lr * cfg.weight_decay);
    let lr_t = T::c(lr);
    for p in store.params_mut() {
        p.step += 1;
        let bc1 = T::c(1.0 - cfg.beta1.powi(p.step as i32));
        let bc2 = T::c(1.0 - cfg.beta2.powi(p.step as i32));
        let value = p.value.data_mut();
        let grad = p.grad.data_mut();
        let m = p.first_moment.data_mut();
        let v = p.second_moment.data_mut();
        for i in 0..value.len() {
            let g = grad[i];
            value[i] -= decay * value[i];
            m[i] = b1 * m[i] + one_b1 * g;
            v[i] = b2 * v[i] + one_b2 * g * g;
            let mhat = m[i] / bc1;
            let vhat = v[i] / bc2;
            value[i] -= lr_t * mhat / (vhat.sqrt() + eps);
            grad[i] = T::zero();
        }
    }
}

/// [`adam_update`] at the scheduled rate for step `t`.
pub fn adam_step<T: Real>(store: &mut ParamStore<T>, cfg: &AdamConfig, schedule: &Schedule, t: u64) {
    adam_update(store, cfg, lr_at(schedule, t));
}
