use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{accumulate_batch_ce, batch_ce, make_batches, EarlyStopState, MetricsLog, Pair, TrainConfig};
use crate::data::DatasetRecord;
use crate::error::{Error, Result};
use crate::eval::teacher_forced_accuracy;
use crate::model::{ConceptIndex, ConceptSeq2Seq};
use crate::tensor::{adam_step, lr_at, Real, Schedule};

/// Few-shot data with the banks each side is scored against.
#[derive(Clone, Copy, Debug)]
pub struct FewShotTask<'a> {
    pub few: &'a [DatasetRecord],
    pub few_index: &'a ConceptIndex,
    /// Rehearsal pool.
    pub known: &'a [DatasetRecord],
    pub known_index: &'a ConceptIndex,
}

/// `CE(few) + λ·CE(known)`, forward only. The known batch is skipped at
/// `λ = 0`.
pub fn fewshot_loss<T: Real>(
    model: &ConceptSeq2Seq<T>,
    few: &[Pair<'_>],
    known: &[Pair<'_>],
    task: &FewShotTask<'_>,
    lambda: f64,
) -> Result<f64> {
    let few_bank = model.encode_index(task.few_index.clone())?;
    let mut loss = batch_ce(model, few, &few_bank)?;
    if lambda > 0.0 && !known.is_empty() {
        let known_bank = model.encode_index(task.known_index.clone())?;
        loss += lambda * batch_ce(model, known, &known_bank)?;
    }
    Ok(loss)
}

/// Gradients of [`fewshot_loss`] accumulated into the model. Returns the loss.
pub fn fewshot_accumulate<T: Real>(
    model: &mut ConceptSeq2Seq<T>,
    few: &[Pair<'_>],
    known: &[Pair<'_>],
    task: &FewShotTask<'_>,
    lambda: f64,
) -> Result<f64> {
    let mut loss = accumulate_batch_ce(model, few, task.few_index, 1.0)?;
    if lambda > 0.0 && !known.is_empty() {
        loss += lambda * accumulate_batch_ce(model, known, task.known_index, lambda)?;
    }
    Ok(loss)
}

#[derive(Clone, Debug)]
pub struct FewShotOutcome {
    pub best_valid: f64,
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub steps: u64,
    pub log: MetricsLog,
}

/// Fine-tune on the few-shot records with a rehearsal batch drawn uniformly
/// from `task.known` each step. Validation is teacher-forced accuracy on the
/// few-shot records, every `cfg.fewshot_eval_every` epochs and after the
/// last one; the model ends at its best validation.
pub fn fewshot_finetune<T: Real>(
    model: &mut ConceptSeq2Seq<T>,
    task: &FewShotTask<'_>,
    cfg: &TrainConfig,
) -> Result<FewShotOutcome> {
    cfg.validate()?;
    if task.few.is_empty() {
        return Err(Error::EmptyFewShot);
    }
    let lambda = cfg.rehearsal_lambda;
    let lengths: Vec<usize> = task.few.iter().map(|r| r.target.len()).collect();
    let per_epoch = task.few.len().div_ceil(cfg.batch_size) as u64;
    let schedule = Schedule::new(cfg.learning_rate, cfg.warmup, per_epoch * cfg.fewshot_epochs as u64);
    let adam = cfg.adam();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut stop = EarlyStopState::new(cfg.patience);
    let mut log = MetricsLog::default();
    let mut t = 0u64;
    let mut epochs_run = 0;
    model.params_mut().reset_optimizer();
    model.params_mut().zero_grad();

    for epoch in 1..=cfg.fewshot_epochs {
        let mut epoch_loss = 0.0;
        let batches = make_batches(&lengths, cfg.batch_size, &mut rng);
        for b in &batches {
            let few: Vec<Pair<'_>> = b.iter().map(|&i| (&task.few[i].utterance, &task.few[i].target)).collect();
            let known: Vec<Pair<'_>> = if lambda > 0.0 && !task.known.is_empty() {
                let k = cfg.batch_size.min(task.known.len());
                sample(&mut rng, task.known.len(), k)
                    .into_iter()
                    .map(|i| (&task.known[i].utterance, &task.known[i].target))
                    .collect()
            } else {
                Vec::new()
            };
            let loss = fewshot_accumulate(model, &few, &known, task, lambda)?;
            let lr = lr_at(&schedule, t);
            adam_step(model.params_mut(), &adam, &schedule, t);
            log.push("finetune", epoch, t, loss, lr, None);
            epoch_loss += loss;
            t += 1;
        }
        epochs_run = epoch;
        if epoch % cfg.fewshot_eval_every == 0 || epoch == cfg.fewshot_epochs {
            let bank = model.encode_index(task.few_index.clone())?;
            let score = teacher_forced_accuracy(model, task.few, &bank)?;
            log.push("valid", epoch, t, epoch_loss / batches.len() as f64, lr_at(&schedule, t), Some(score));
            log::info!("fine-tune epoch {epoch}: accuracy on the few-shot set {score:.2}");
            if !stop.observe(epoch, score, || model.params().values()) {
                break;
            }
        }
    }
    if let Some(best) = &stop.best_params {
        model.params_mut().restore_values(best);
    }
    Ok(FewShotOutcome {
        best_valid: stop.best_score,
        best_epoch: stop.best_epoch,
        epochs_run,
        steps: t,
        log,
    })
}
