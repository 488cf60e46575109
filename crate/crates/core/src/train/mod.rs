//! Losses and training loops.

mod config;
mod fewshot;
mod known;
mod log;
mod pretrain;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;

pub use config::TrainConfig;
pub use fewshot::{fewshot_accumulate, fewshot_finetune, fewshot_loss, FewShotOutcome, FewShotTask};
pub use known::{train_known_domains, TrainOutcome};
pub use log::{MetricRow, MetricsLog};
pub use pretrain::{pretrain_step, pretrain_wikiwiki, PretrainBatch, PretrainOutcome};

use crate::error::{Error, Result};
use crate::model::{ConceptBank, ConceptIndex, ConceptSeq2Seq, StepDistribution};
use crate::parse::{TargetSequence, Utterance};
use crate::tensor::{Graph, Grads, Real, Tensor};

/// A borrowed (source, gold target) training pair.
pub type Pair<'a> = (&'a Utterance, &'a TargetSequence);

/// Summed `-log P(gold)` over positions, accumulated in `T`.
pub fn sequence_nll<T: Real>(dists: &[StepDistribution<T>], gold: &[usize]) -> Result<T> {
    if dists.len() != gold.len() {
        return Err(Error::shape(
            "sequence_ce_loss",
            format!("{} distributions for {} gold tokens", dists.len(), gold.len()),
        ));
    }
    let mut s = T::zero();
    for (d, &g) in dists.iter().zip(gold) {
        if g >= d.support() {
            return Err(Error::Support {
                index: g,
                support: d.support(),
            });
        }
        s -= d.log_probs[g];
    }
    Ok(s)
}

/// Mean `-log P(gold)` over the positions of one sequence.
pub fn sequence_ce_loss<T: Real>(dists: &[StepDistribution<T>], gold: &[usize]) -> Result<f64> {
    if gold.is_empty() {
        return Ok(0.0);
    }
    Ok(sequence_nll(dists, gold)?.f64() / gold.len() as f64)
}

/// Token-weighted cross entropy of a batch under a fixed bank, without
/// building gradients.
pub fn batch_ce<T: Real>(model: &ConceptSeq2Seq<T>, batch: &[Pair<'_>], bank: &ConceptBank<T>) -> Result<f64> {
    let mut total = 0.0;
    let mut tokens = 0;
    for (utt, target) in batch {
        let src = model.encode_source(utt)?;
        let dists = model.forward_teacher_forced(&src, target, bank)?;
        let (_, gold) = bank.index.teacher_rows(target, utt.len(), model.config().max_source_len)?;
        total += sequence_nll(&dists, &gold)?.f64();
        tokens += gold.len();
    }
    Ok(total / tokens.max(1) as f64)
}

/// Forward and backward for `weight · CE(batch)` with concept vectors
/// computed once for `index`. Gradients are added to the model's slots;
/// returns the batch cross entropy (token-weighted).
///
/// Examples run on separate graphs in parallel; their gradients are summed in
/// batch order, so the result does not depend on scheduling.
pub fn accumulate_batch_ce<T: Real>(
    model: &mut ConceptSeq2Seq<T>,
    batch: &[Pair<'_>],
    index: &ConceptIndex,
    weight: f64,
) -> Result<f64> {
    if batch.is_empty() {
        return Ok(0.0);
    }
    let tokens: usize = batch.iter().map(|(_, t)| t.len()).sum();
    let scale = T::c(weight / tokens as f64);
    let (loss, grads) = {
        let m: &ConceptSeq2Seq<T> = model;
        let mut g0 = Graph::new(m.params());
        let bank = m.graph_concepts(&mut g0, index)?;
        let bank_value = g0.value(bank).clone();
        let per_example = batch
            .par_iter()
            .map(|(utt, target)| -> Result<(T, Grads<T>, Tensor<T>)> {
                let mut g = Graph::new(m.params());
                let input = g.input(bank_value.clone(), true);
                let (nll, _) = m.graph_nll(&mut g, utt, target, input, index)?;
                let scaled = g.scale(nll, scale)?;
                let grads = g.backward(scaled)?;
                let d_bank = grads
                    .grad(input)
                    .cloned()
                    .unwrap_or_else(|| Tensor::zeros_like(&bank_value));
                Ok((g.value(nll).item(), grads, d_bank))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut total = 0.0;
        let mut d_bank = Tensor::zeros_like(&bank_value);
        let mut all = Vec::with_capacity(per_example.len() + 1);
        for (nll, grads, db) in per_example {
            total += nll.f64();
            d_bank.add_assign(&db);
            all.push(grads);
        }
        all.push(g0.backward_seeded(vec![(bank, d_bank)])?);
        (total / tokens as f64, all)
    };
    for g in &grads {
        model.params_mut().accumulate(g);
    }
    Ok(loss)
}

/// Batches of indices: shuffled, bucketed by length, then batch order
/// shuffled again.
pub fn make_batches<R: Rng>(lengths: &[usize], batch_size: usize, rng: &mut R) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..lengths.len()).collect();
    order.shuffle(rng);
    order.sort_by_key(|&i| lengths[i]);
    let mut batches: Vec<Vec<usize>> = order.chunks(batch_size.max(1)).map(|c| c.to_vec()).collect();
    batches.shuffle(rng);
    batches
}

/// Best validation score so far and the parameters that achieved it.
#[derive(Clone, Debug)]
pub struct EarlyStopState<T> {
    pub best_score: f64,
    pub best_epoch: usize,
    pub best_params: Option<Vec<Tensor<T>>>,
    pub since_improvement: usize,
    pub patience: usize,
}

impl<T: Real> EarlyStopState<T> {
    pub fn new(patience: usize) -> Self {
        EarlyStopState {
            best_score: f64::NEG_INFINITY,
            best_epoch: 0,
            best_params: None,
            since_improvement: 0,
            patience,
        }
    }

    /// Record a validation result; returns `false` once training should stop.
    pub fn observe(&mut self, epoch: usize, score: f64, params: impl FnOnce() -> Vec<Tensor<T>>) -> bool {
        if score > self.best_score {
            self.best_score = score;
            self.best_epoch = epoch;
            self.best_params = Some(params());
            self.since_improvement = 0;
        } else {
            self.since_improvement += 1;
        }
        // nothing can beat a perfect score, so stopping early changes nothing
        self.since_improvement < self.patience && self.best_score < 100.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn dist(probs: &[f64]) -> StepDistribution<f64> {
        StepDistribution {
            m: probs.len(),
            n: 0,
            concept_scores: vec![],
            pointer_scores: vec![],
            probs: probs.to_vec(),
            log_probs: probs.iter().map(|p| p.ln()).collect(),
        }
    }

    #[test]
    fn ce_examples() {
        assert_eq!(sequence_ce_loss(&[dist(&[1.0, 0.0])], &[0]).unwrap(), 0.0);
        let u = dist(&[0.25; 4]);
        assert!((sequence_ce_loss(&[u.clone(), u], &[1, 3]).unwrap() - 4f64.ln()).abs() < 1e-15);
        let l = sequence_ce_loss(&[dist(&[0.5, 0.5]), dist(&[0.25, 0.75])], &[0, 0]).unwrap();
        assert!((l - (2f64.ln() + 4f64.ln()) / 2.0).abs() < 1e-12);
        assert!((l - 1.0397).abs() < 1e-4);
        assert!(matches!(sequence_ce_loss(&[dist(&[1.0])], &[3]), Err(Error::Support { .. })));
    }

    #[test]
    fn batches_cover_everything_once() {
        let lens: Vec<usize> = (0..37).map(|i| i % 7).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let b = make_batches(&lens, 8, &mut rng);
        let mut all: Vec<usize> = b.concat();
        all.sort();
        assert_eq!(all, (0..37).collect::<Vec<_>>());
        assert_eq!(b.len(), 5);
        let again = make_batches(&lens, 8, &mut ChaCha8Rng::seed_from_u64(1));
        assert_eq!(b, again);
    }

    #[test]
    fn early_stop_counts_non_improving() {
        let mut s = EarlyStopState::<f32>::new(2);
        assert!(s.observe(1, 10.0, Vec::new));
        assert!(s.observe(2, 10.0, Vec::new));
        assert!(!s.observe(3, 5.0, Vec::new));
        assert_eq!(s.best_epoch, 1);
        let mut p = EarlyStopState::<f32>::new(5);
        assert!(!p.observe(1, 100.0, Vec::new));
    }
}
