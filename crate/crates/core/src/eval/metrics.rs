use std::collections::HashMap;
use std::ops::AddAssign;

use serde::{Deserialize, Serialize};

use crate::parse::{extract_labeled_spans, LabeledSpan, ParseTree, TargetSequence};

/// 1 iff the prediction is valid and token-for-token equal to gold.
pub fn exact_match(pred: Option<&TargetSequence>, gold: &TargetSequence) -> bool {
    pred.is_some_and(|p| p == gold)
}

/// Matched / predicted / gold labeled-span counts.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpanCounts {
    pub matched: usize,
    pub predicted: usize,
    pub gold: usize,
}

impl AddAssign for SpanCounts {
    fn add_assign(&mut self, o: SpanCounts) {
        self.matched += o.matched;
        self.predicted += o.predicted;
        self.gold += o.gold;
    }
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        100.0 * a as f64 / b as f64
    }
}

impl SpanCounts {
    pub fn precision(&self) -> f64 {
        ratio(self.matched, self.predicted)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.matched, self.gold)
    }

    /// Harmonic mean of precision and recall, in percent.
    pub fn f1(&self) -> f64 {
        if self.predicted + self.gold == 0 {
            return 100.0;
        }
        ratio(2 * self.matched, self.predicted + self.gold)
    }
}

/// Multiset intersection of `(label, span)` pairs. An invalid prediction
/// (`None`) contributes no predicted spans.
pub fn labeled_span_f1(pred: Option<&ParseTree>, gold: &ParseTree) -> SpanCounts {
    let gold_spans = extract_labeled_spans(gold);
    let pred_spans = pred.map(extract_labeled_spans).unwrap_or_default();
    let mut bag: HashMap<&LabeledSpan, usize> = HashMap::new();
    for s in &gold_spans {
        *bag.entry(s).or_default() += 1;
    }
    let mut matched = 0;
    for s in &pred_spans {
        if let Some(c) = bag.get_mut(s) {
            if *c > 0 {
                *c -= 1;
                matched += 1;
            }
        }
    }
    SpanCounts {
        matched,
        predicted: pred_spans.len(),
        gold: gold_spans.len(),
    }
}
