//! Decoding, metrics, and per-domain evaluation reports.

mod beam;
mod metrics;

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use beam::{beam_decode, greedy_decode, Hypothesis, StepScorer};
pub use metrics::{exact_match, labeled_span_f1, SpanCounts};

use crate::data::DatasetRecord;
use crate::error::{Error, Result};
use crate::model::{CompiledDomain, ConceptBank, ConceptSeq2Seq, DecoderState, SourceEncoding};
use crate::parse::{delinearize, TargetToken, Utterance};
use crate::tensor::Real;

/// Scores steps with a model over one encoded utterance and a compiled domain.
pub struct ModelScorer<'a, T: Real> {
    model: &'a ConceptSeq2Seq<T>,
    domain: &'a CompiledDomain<T>,
    src: SourceEncoding<T>,
}

impl<'a, T: Real> ModelScorer<'a, T> {
    pub fn new(model: &'a ConceptSeq2Seq<T>, domain: &'a CompiledDomain<T>, utt: &Utterance) -> Result<Self> {
        Ok(ModelScorer {
            model,
            domain,
            src: model.encode_source(utt)?,
        })
    }
}

impl<T: Real> StepScorer for ModelScorer<'_, T> {
    type State = DecoderState<T>;

    fn start(&self) -> Result<DecoderState<T>> {
        Ok(self.model.start())
    }

    fn step(&self, state: &DecoderState<T>, prev: Option<usize>) -> Result<(Vec<f64>, DecoderState<T>)> {
        let prev = prev.map(|i| self.token(i));
        let (dist, next) = self.model.decode_step_compiled(state, prev.as_ref(), &self.src, self.domain)?;
        Ok((dist.log_probs.iter().map(|x| x.f64()).collect(), next))
    }

    fn token(&self, index: usize) -> TargetToken {
        self.domain.index().token(index)
    }

    fn source_len(&self) -> usize {
        self.src.n()
    }

    fn max_len(&self) -> usize {
        self.model.config().max_target_len
    }
}

/// Decode one utterance; beam width 1 runs the greedy decoder.
pub fn decode<T: Real>(
    model: &ConceptSeq2Seq<T>,
    domain: &CompiledDomain<T>,
    utt: &Utterance,
    beam: usize,
) -> Result<Hypothesis> {
    let scorer = ModelScorer::new(model, domain, utt)?;
    if beam <= 1 {
        greedy_decode(&scorer)
    } else {
        Ok(beam_decode(&scorer, beam)?.remove(0))
    }
}

/// Percentage of records whose every teacher-forced argmax equals gold.
pub fn teacher_forced_accuracy<T: Real>(
    model: &ConceptSeq2Seq<T>,
    records: &[DatasetRecord],
    bank: &ConceptBank<T>,
) -> Result<f64> {
    if records.is_empty() {
        return Err(Error::EmptyEvalSet);
    }
    let hits = records
        .par_iter()
        .map(|r| -> Result<bool> {
            let src = model.encode_source(&r.utterance)?;
            let dists = model.forward_teacher_forced(&src, &r.target, bank)?;
            for (d, tok) in dists.iter().zip(r.target.tokens()) {
                if d.argmax() != bank.index.output_index(tok, src.n())? {
                    return Ok(false);
                }
            }
            Ok(true)
        })
        .collect::<Result<Vec<bool>>>()?;
    Ok(100.0 * hits.iter().filter(|&&h| h).count() as f64 / records.len() as f64)
}

/// One decoded test example.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    pub utterance: String,
    pub gold: String,
    /// `None` when decoding produced no well-formed parse.
    pub pred: Option<String>,
    pub em: bool,
    pub f1_counts: SpanCounts,
    pub valid: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub examples: usize,
    pub exact: usize,
    pub valid: usize,
    pub em: f64,
    pub f1: f64,
    pub precision: f64,
    pub recall: f64,
    pub validity: f64,
    pub spans: SpanCounts,
    #[serde(skip)]
    pub outcomes: Vec<Outcome>,
}

impl EvalReport {
    pub fn from_outcomes(outcomes: Vec<Outcome>) -> Result<Self> {
        if outcomes.is_empty() {
            return Err(Error::EmptyEvalSet);
        }
        let n = outcomes.len();
        let exact = outcomes.iter().filter(|o| o.em).count();
        let valid = outcomes.iter().filter(|o| o.valid).count();
        let mut spans = SpanCounts::default();
        for o in &outcomes {
            spans += o.f1_counts;
        }
        let pct = |k: usize| 100.0 * k as f64 / n as f64;
        Ok(EvalReport {
            examples: n,
            exact,
            valid,
            em: pct(exact),
            f1: spans.f1(),
            precision: spans.precision(),
            recall: spans.recall(),
            validity: pct(valid),
            spans,
            outcomes,
        })
    }

    /// Aligned two-column summary.
    pub fn table(&self) -> String {
        let rows = [
            ("examples", self.examples.to_string()),
            ("exact match", format!("{:.2}", self.em)),
            ("span F1", format!("{:.2}", self.f1)),
            ("span precision", format!("{:.2}", self.precision)),
            ("span recall", format!("{:.2}", self.recall)),
            ("valid outputs", format!("{:.2}", self.validity)),
        ];
        let mut s = String::new();
        for (k, v) in rows {
            let _ = writeln!(s, "{k:<16}{v:>10}");
        }
        s
    }
}

/// Score one prediction against its record. A prediction counts as valid
/// only if it rebuilds into a tree, which rules out flat tagging output.
pub fn score_prediction(record: &DatasetRecord, hyp: &Hypothesis) -> Outcome {
    let tree = if hyp.valid {
        delinearize(&hyp.tokens, &record.utterance).ok()
    } else {
        None
    };
    let pred = tree.as_ref().map(|_| &hyp.tokens);
    Outcome {
        utterance: record.utterance.text(),
        gold: record.target.to_string(),
        pred: pred.map(|p| p.to_string()),
        em: exact_match(pred, &record.target),
        f1_counts: labeled_span_f1(tree.as_ref(), &record.tree),
        valid: tree.is_some(),
    }
}

/// Decode every record with beam width `beam` and aggregate metrics.
pub fn evaluate_domain<T: Real>(
    model: &ConceptSeq2Seq<T>,
    domain: &CompiledDomain<T>,
    records: &[DatasetRecord],
    beam: usize,
) -> Result<EvalReport> {
    if records.is_empty() {
        return Err(Error::EmptyEvalSet);
    }
    let outcomes = records
        .par_iter()
        .map(|r| decode(model, domain, &r.utterance, beam).map(|h| score_prediction(r, &h)))
        .collect::<Result<Vec<_>>>()?;
    EvalReport::from_outcomes(outcomes)
}
