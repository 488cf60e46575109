//! Greedy and beam search over any step-wise scorer.

use crate::error::Result;
use crate::parse::{StructureTracker, TargetSequence, TargetToken};

/// A left-to-right model over a fixed support of output indices.
pub trait StepScorer {
    type State: Clone;

    fn start(&self) -> Result<Self::State>;

    /// Log-probabilities of every next index after `prev` (`None` first).
    fn step(&self, state: &Self::State, prev: Option<usize>) -> Result<(Vec<f64>, Self::State)>;

    fn token(&self, index: usize) -> TargetToken;

    /// Source length, for pointer-range checks.
    fn source_len(&self) -> usize;

    fn max_len(&self) -> usize;
}

#[derive(Clone, Debug, PartialEq)]
pub struct Hypothesis {
    pub tokens: TargetSequence,
    pub indices: Vec<usize>,
    pub log_prob: f64,
    pub finished: bool,
    /// Structurally valid and stopped before the length limit.
    pub valid: bool,
}

#[derive(Clone)]
struct Live<S> {
    indices: Vec<usize>,
    tokens: Vec<TargetToken>,
    tracker: StructureTracker,
    log_prob: f64,
    state: S,
}

impl<S> Live<S> {
    fn retire(self, truncated: bool) -> Hypothesis {
        let valid = !truncated && self.tracker.finish().is_valid();
        Hypothesis {
            tokens: TargetSequence(self.tokens),
            indices: self.indices,
            log_prob: self.log_prob,
            finished: true,
            valid,
        }
    }
}

/// Argmax of `cum + logp` per step, first index on ties.
pub fn greedy_decode<S: StepScorer>(scorer: &S) -> Result<Hypothesis> {
    let mut state = scorer.start()?;
    let mut tracker = StructureTracker::new(scorer.source_len());
    let mut tokens = Vec::new();
    let mut indices: Vec<usize> = Vec::new();
    let mut cum = 0.0;
    while indices.len() < scorer.max_len() {
        let (logp, next) = scorer.step(&state, indices.last().copied())?;
        let mut best = 0;
        let mut best_score = f64::NEG_INFINITY;
        for (j, &lp) in logp.iter().enumerate() {
            let s = cum + lp;
            if s > best_score {
                best = j;
                best_score = s;
            }
        }
        cum = best_score;
        let tok = scorer.token(best);
        tracker.push(&tok);
        tokens.push(tok);
        indices.push(best);
        state = next;
        if tracker.is_complete() {
            let valid = tracker.finish().is_valid();
            return Ok(Hypothesis {
                tokens: TargetSequence(tokens),
                indices,
                log_prob: cum,
                finished: true,
                valid,
            });
        }
    }
    Ok(Hypothesis {
        tokens: TargetSequence(tokens),
        indices,
        log_prob: cum,
        finished: true,
        valid: false,
    })
}

/// Length-unnormalized beam search. Returns finished hypotheses, best first.
/// Hypotheses cut off by the length limit are included but marked invalid.
pub fn beam_decode<S: StepScorer>(scorer: &S, beam: usize) -> Result<Vec<Hypothesis>> {
    assert!(beam >= 1, "beam width must be at least 1");
    let mut active = vec![Live {
        indices: Vec::new(),
        tokens: Vec::new(),
        tracker: StructureTracker::new(scorer.source_len()),
        log_prob: 0.0,
        state: scorer.start()?,
    }];
    let mut pool: Vec<Hypothesis> = Vec::new();
    let mut pruned = false;
    for _ in 0..scorer.max_len() {
        if active.is_empty() {
            break;
        }
        let mut expanded = Vec::with_capacity(active.len());
        let mut cands: Vec<(f64, usize, usize)> = Vec::new();
        for (h, live) in active.iter().enumerate() {
            let (logp, next) = scorer.step(&live.state, live.indices.last().copied())?;
            cands.extend(logp.iter().enumerate().map(|(j, &lp)| (live.log_prob + lp, h, j)));
            expanded.push(next);
        }
        // best score first; ties go to the earlier hypothesis, then lower index
        cands.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        let mut next_active = Vec::with_capacity(beam);
        for &(score, h, j) in cands.iter().take(beam) {
            let parent = &active[h];
            let tok = scorer.token(j);
            let mut tracker = parent.tracker.clone();
            tracker.push(&tok);
            let mut tokens = parent.tokens.clone();
            tokens.push(tok);
            let mut indices = parent.indices.clone();
            indices.push(j);
            let live = Live {
                indices,
                tokens,
                tracker,
                log_prob: score,
                state: expanded[h].clone(),
            };
            if live.tracker.is_complete() {
                pool.push(live.retire(false));
            } else {
                next_active.push(live);
            }
        }
        active = next_active;
        if pool.len() >= beam {
            let mut scores: Vec<f64> = pool.iter().map(|h| h.log_prob).collect();
            scores.sort_by(|a, b| b.total_cmp(a));
            let kth = scores[beam - 1];
            if active.iter().all(|a| a.log_prob <= kth) {
                pruned = true;
                break;
            }
        }
    }
    if !pruned {
        // whatever is still open ran into the length limit
        pool.extend(active.into_iter().map(|live| live.retire(true)));
    }
    pool.sort_by(|a, b| b.log_prob.total_cmp(&a.log_prob));
    Ok(pool)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Fixed per-step distributions, independent of history.
    struct Table {
        steps: Vec<Vec<f64>>,
        m: usize,
        n: usize,
    }

    impl StepScorer for Table {
        type State = usize;
        fn start(&self) -> Result<usize> {
            Ok(0)
        }
        fn step(&self, t: &usize, _: Option<usize>) -> Result<(Vec<f64>, usize)> {
            Ok((self.steps[*t].iter().map(|p| p.ln()).collect(), t + 1))
        }
        fn token(&self, i: usize) -> TargetToken {
            if i < self.m {
                TargetToken::Concept(if i.is_multiple_of(2) { "[IN:A" } else { "IN:A]" }.parse().unwrap())
            } else {
                TargetToken::Pointer(i - self.m)
            }
        }
        fn source_len(&self) -> usize {
            self.n
        }
        fn max_len(&self) -> usize {
            self.steps.len()
        }
    }

    #[test]
    fn beam_finds_better_path_than_greedy() {
        // greedy takes "[IN:A" then is stuck with weak continuations
        let t = Table {
            m: 2,
            n: 1,
            steps: vec![vec![0.5, 0.1, 0.4], vec![0.3, 0.3, 0.4], vec![0.1, 0.8, 0.1]],
        };
        let g = greedy_decode(&t).unwrap();
        let b1 = &beam_decode(&t, 1).unwrap()[0];
        assert_eq!(g.indices, b1.indices);
        let b4 = &beam_decode(&t, 4).unwrap()[0];
        assert_eq!(b4.indices, vec![2]);
        assert!(b4.valid);
        assert!(b4.log_prob >= g.log_prob);
    }
}
