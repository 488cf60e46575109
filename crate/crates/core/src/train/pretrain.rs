use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{accumulate_batch_ce, make_batches, MetricsLog, Pair, TrainConfig};
use crate::data::PretrainExample;
use crate::error::{Error, Result};
use crate::model::{ConceptIndex, ConceptSeq2Seq};
use crate::parse::ConceptTag;
use crate::tensor::{adam_step, lr_at, AdamConfig, Real, Schedule};

/// Pretraining examples with the union of their concept tags. The union is
/// the whole output bank for the step, so every other batch's tags act as
/// absent negatives.
#[derive(Clone, Debug)]
pub struct PretrainBatch {
    pub examples: Vec<PretrainExample>,
    pub union: ConceptIndex,
}

impl PretrainBatch {
    /// Deduplicated tags in order of first appearance.
    pub fn new(examples: Vec<PretrainExample>) -> Result<Self> {
        let mut tags: Vec<ConceptTag> = Vec::new();
        for ex in &examples {
            for t in &ex.tags {
                if !tags.iter().any(|u| u.key == t.key) {
                    tags.push(t.clone());
                }
            }
        }
        let union = ConceptIndex::new(tags)?;
        Ok(PretrainBatch { examples, union })
    }

    pub fn pairs(&self) -> Vec<Pair<'_>> {
        self.examples.iter().map(|e| (&e.utterance, &e.target)).collect()
    }
}

/// Cross entropy of the batch under its own concept union, then one Adam
/// update at step `t`. Returns the pre-update loss.
pub fn pretrain_step<T: Real>(
    model: &mut ConceptSeq2Seq<T>,
    batch: &PretrainBatch,
    adam: &AdamConfig,
    schedule: &Schedule,
    t: u64,
) -> Result<f64> {
    let loss = accumulate_batch_ce(model, &batch.pairs(), &batch.union, 1.0)?;
    adam_step(model.params_mut(), adam, schedule, t);
    Ok(loss)
}

#[derive(Clone, Debug)]
pub struct PretrainOutcome {
    pub epochs_run: usize,
    pub steps: u64,
    /// Examples left out because they exceed the model's length limits.
    pub skipped: usize,
    pub log: MetricsLog,
}

/// `cfg.pretrain_epochs` passes of [`pretrain_step`] over the corpus.
pub fn pretrain_wikiwiki<T: Real>(
    model: &mut ConceptSeq2Seq<T>,
    corpus: &[PretrainExample],
    cfg: &TrainConfig,
) -> Result<PretrainOutcome> {
    cfg.validate()?;
    let mc = model.config().clone();
    let usable: Vec<&PretrainExample> = corpus
        .iter()
        .filter(|e| e.utterance.len() <= mc.max_source_len && e.target.len() <= mc.max_target_len && !e.tags.is_empty())
        .collect();
    let skipped = corpus.len() - usable.len();
    if skipped > 0 {
        log::info!("pretraining skips {skipped} examples over the length limits");
    }
    let lengths: Vec<usize> = usable.iter().map(|e| e.target.len()).collect();
    let per_epoch = usable.len().div_ceil(cfg.batch_size) as u64;
    let schedule = Schedule::new(cfg.learning_rate, cfg.warmup, per_epoch * cfg.pretrain_epochs as u64);
    let adam = cfg.adam();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut log = MetricsLog::default();
    let mut t = 0u64;
    model.params_mut().zero_grad();
    if usable.is_empty() {
        return Ok(PretrainOutcome {
            epochs_run: 0,
            steps: 0,
            skipped,
            log,
        });
    }
    for epoch in 1..=cfg.pretrain_epochs {
        for b in make_batches(&lengths, cfg.batch_size, &mut rng) {
            let batch = match PretrainBatch::new(b.iter().map(|&i| usable[i].clone()).collect()) {
                Ok(batch) => batch,
                Err(Error::EmptyDescription) => continue,
                Err(e) => return Err(e),
            };
            let lr = lr_at(&schedule, t);
            let loss = pretrain_step(model, &batch, &adam, &schedule, t)?;
            log.push("pretrain", epoch, t, loss, lr, None);
            t += 1;
        }
    }
    Ok(PretrainOutcome {
        epochs_run: cfg.pretrain_epochs,
        steps: t,
        skipped,
        log,
    })
}
