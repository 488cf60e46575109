use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::AdamConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    /// Epoch cap for known-domain training.
    pub epochs: usize,
    /// Non-improving validations tolerated before stopping.
    pub patience: usize,
    pub learning_rate: f64,
    pub warmup: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    /// Weight of the rehearsal (known-domain) loss during fine-tuning.
    pub rehearsal_lambda: f64,
    pub pretrain_epochs: usize,
    pub fewshot_epochs: usize,
    /// Fine-tuning validates every this many epochs.
    pub fewshot_eval_every: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 16,
            epochs: 100,
            patience: 5,
            learning_rate: 1e-3,
            warmup: 0.1,
            weight_decay: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            rehearsal_lambda: 0.1,
            pretrain_epochs: 2,
            fewshot_epochs: 1000,
            fewshot_eval_every: 25,
            seed: 1,
        }
    }
}

impl TrainConfig {
    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.adam_eps,
            weight_decay: self.weight_decay,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_owned()));
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if self.patience == 0 {
            return bad("patience must be at least 1");
        }
        if self.rehearsal_lambda < 0.0 {
            return bad("rehearsal_lambda must be non-negative");
        }
        if !(0.0..=1.0).contains(&self.warmup) {
            return bad("warmup must lie in [0, 1]");
        }
        if self.fewshot_eval_every == 0 {
            return bad("fewshot_eval_every must be positive");
        }
        if self.learning_rate < 0.0 {
            return bad("learning_rate must be non-negative");
        }
        Ok(())
    }
}
