use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{accumulate_batch_ce, make_batches, EarlyStopState, MetricsLog, Pair, TrainConfig};
use crate::data::{domain_labels, DatasetRecord};
use crate::error::{Error, Result};
use crate::eval::teacher_forced_accuracy;
use crate::model::{ConceptIndex, ConceptSeq2Seq};
use crate::tensor::{adam_step, lr_at, Real, Schedule};

/// Summary of a training run. The model itself is updated in place.
#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub best_valid: f64,
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub steps: u64,
    /// Validation score after each epoch, in order.
    pub valid_scores: Vec<f64>,
    pub log: MetricsLog,
}

/// Batched cross entropy over every known-domain concept, validated by
/// teacher-forced accuracy after each epoch. Leaves the model at its best
/// validation epoch.
pub fn train_known_domains<T: Real>(
    model: &mut ConceptSeq2Seq<T>,
    train: &[DatasetRecord],
    valid: &[DatasetRecord],
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::InvalidData("no known-domain training records".into()));
    }
    if valid.is_empty() {
        return Err(Error::EmptyEvalSet);
    }
    let index = ConceptIndex::for_labels(&domain_labels(train.iter().chain(valid)))?;
    let lengths: Vec<usize> = train.iter().map(|r| r.target.len()).collect();
    let per_epoch = train.len().div_ceil(cfg.batch_size) as u64;
    let schedule = Schedule::new(cfg.learning_rate, cfg.warmup, per_epoch * cfg.epochs as u64);
    let adam = cfg.adam();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut stop = EarlyStopState::new(cfg.patience);
    let mut log = MetricsLog::default();
    let mut valid_scores = Vec::new();
    let mut t = 0u64;
    let mut epochs_run = 0;
    model.params_mut().zero_grad();

    for epoch in 1..=cfg.epochs {
        let mut epoch_loss = 0.0;
        let batches = make_batches(&lengths, cfg.batch_size, &mut rng);
        for b in &batches {
            let pairs: Vec<Pair<'_>> = b.iter().map(|&i| (&train[i].utterance, &train[i].target)).collect();
            let loss = accumulate_batch_ce(model, &pairs, &index, 1.0)?;
            let lr = lr_at(&schedule, t);
            adam_step(model.params_mut(), &adam, &schedule, t);
            log.push("train", epoch, t, loss, lr, None);
            epoch_loss += loss;
            t += 1;
        }
        epochs_run = epoch;
        let bank = model.encode_index(index.clone())?;
        let score = teacher_forced_accuracy(model, valid, &bank)?;
        valid_scores.push(score);
        log.push("valid", epoch, t, epoch_loss / batches.len() as f64, lr_at(&schedule, t), Some(score));
        log::info!("epoch {epoch}: valid teacher-forced accuracy {score:.2}");
        if !stop.observe(epoch, score, || model.params().values()) {
            break;
        }
    }
    if let Some(best) = &stop.best_params {
        model.params_mut().restore_values(best);
    }
    Ok(TrainOutcome {
        best_valid: stop.best_score,
        best_epoch: stop.best_epoch,
        epochs_run,
        steps: t,
        valid_scores,
        log,
    })
}
