//! Pointer linearization of parse trees and its inverse.

use std::fmt;

use serde::{Deserialize, Serialize};

use super::token::{Boundary, Label, TargetSequence, TargetToken, Utterance};
use super::tree::{Child, ParseTree};
use crate::error::{Error, Result};

/// Depth-first emission: begin tag, children (token `i` becomes `@ptr_i`), end tag.
pub fn linearize(tree: &ParseTree, utterance: &Utterance) -> Result<TargetSequence> {
    let mut out = Vec::new();
    emit(tree, utterance.len(), &mut out)?;
    Ok(TargetSequence(out))
}

fn emit(tree: &ParseTree, n: usize, out: &mut Vec<TargetToken>) -> Result<()> {
    out.push(TargetToken::Concept(tree.label.begin()));
    for c in &tree.children {
        match c {
            Child::Token(i) if *i >= n => return Err(Error::PointerRange { index: *i, len: n }),
            Child::Token(i) => out.push(TargetToken::Pointer(*i)),
            Child::Node(t) => emit(t, n, out)?,
        }
    }
    out.push(TargetToken::Concept(tree.label.end()));
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IssueKind {
    Unbalanced,
    NameMismatch,
    PointerRange,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TargetIssue {
    pub kind: IssueKind,
    pub position: usize,
}

impl fmt::Display for TargetIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let what = match self.kind {
            IssueKind::Unbalanced => "unbalanced",
            IssueKind::NameMismatch => "name-mismatch",
            IssueKind::PointerRange => "pointer-range",
        };
        write!(f, "{what} at position {}", self.position)
    }
}

/// Well-formedness of a target sequence.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TargetValidity {
    Valid,
    Invalid(TargetIssue),
}

impl TargetValidity {
    pub fn is_valid(&self) -> bool {
        matches!(self, TargetValidity::Valid)
    }
}

/// Incremental bracket bookkeeping shared by validation and decoding.
///
/// Two shapes are well formed. A rooted sequence is one bracket spanning the
/// whole sequence, as emitted by [`linearize`]. A flat sequence interleaves
/// top-level pointers with depth-1 brackets and mentions every source index
/// once, as produced for typed-mention pretraining data. Both are checked in
/// parallel; each records its first issue and keeps going, so a decoder can
/// extend an already-invalid hypothesis until it stops.
#[derive(Clone, Debug)]
pub struct StructureTracker {
    n: usize,
    stack: Vec<Label>,
    len: usize,
    pointers: usize,
    last_pointer: Option<usize>,
    rooted_issue: Option<TargetIssue>,
    flat_issue: Option<TargetIssue>,
    opened_with_begin: bool,
    root_closed: bool,
    saw_last_pointer: bool,
}

fn first(slot: &mut Option<TargetIssue>, kind: IssueKind, position: usize) {
    if slot.is_none() {
        *slot = Some(TargetIssue { kind, position });
    }
}

impl StructureTracker {
    pub fn new(n: usize) -> Self {
        StructureTracker {
            n,
            stack: Vec::new(),
            len: 0,
            pointers: 0,
            last_pointer: None,
            rooted_issue: None,
            flat_issue: None,
            opened_with_begin: false,
            root_closed: false,
            saw_last_pointer: false,
        }
    }

    fn flag_both(&mut self, kind: IssueKind) {
        first(&mut self.rooted_issue, kind, self.len);
        first(&mut self.flat_issue, kind, self.len);
    }

    pub fn push(&mut self, token: &TargetToken) {
        let outside = self.stack.is_empty();
        match token {
            TargetToken::Pointer(i) => {
                if outside {
                    first(&mut self.rooted_issue, IssueKind::Unbalanced, self.len);
                }
                // a pointer that does not advance is as unreachable as one past the end
                if *i >= self.n || self.last_pointer.is_some_and(|p| *i <= p) {
                    self.flag_both(IssueKind::PointerRange);
                }
                self.last_pointer = Some(*i);
                self.pointers += 1;
                if self.n > 0 && *i == self.n - 1 {
                    self.saw_last_pointer = true;
                }
            }
            TargetToken::Concept(key) => match key.boundary {
                Boundary::Begin => {
                    if self.len == 0 {
                        self.opened_with_begin = true;
                    } else if outside {
                        first(&mut self.rooted_issue, IssueKind::Unbalanced, self.len);
                    }
                    if !outside {
                        first(&mut self.flat_issue, IssueKind::Unbalanced, self.len);
                    }
                    self.stack.push(key.label());
                }
                Boundary::End => match self.stack.pop() {
                    None => self.flag_both(IssueKind::Unbalanced),
                    Some(open) => {
                        if open.name != key.name || open.kind != key.kind {
                            self.flag_both(IssueKind::NameMismatch);
                        }
                        if self.stack.is_empty() && self.opened_with_begin {
                            self.root_closed = true;
                        }
                    }
                },
            },
        }
        self.len += 1;
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn depth(&self) -> usize {
        self.stack.len()
    }

    /// Stop criterion: nothing left open, and either the opening bracket has
    /// closed or the last source position has been emitted.
    pub fn is_complete(&self) -> bool {
        self.len > 0 && self.stack.is_empty() && (self.root_closed || self.saw_last_pointer)
    }

    /// Verdict on the sequence so far. When neither shape fits, the issue
    /// reported is the rooted one for sequences that open with a bracket and
    /// the flat one otherwise.
    pub fn finish(&self) -> TargetValidity {
        let open = (!self.stack.is_empty() || self.len == 0).then_some(TargetIssue {
            kind: IssueKind::Unbalanced,
            position: self.len,
        });
        let rooted = self.rooted_issue.or(open);
        let coverage = (self.pointers != self.n).then_some(TargetIssue {
            kind: IssueKind::PointerRange,
            position: self.len,
        });
        let flat = self.flat_issue.or(open).or(coverage);
        match (rooted, flat) {
            (None, _) | (_, None) => TargetValidity::Valid,
            (Some(r), Some(f)) => TargetValidity::Invalid(if self.opened_with_begin { r } else { f }),
        }
    }
}

/// Check bracket balance, begin/end name agreement and pointer range against
/// a source of length `n`. Reports the first offending position.
pub fn validate_target(seq: &TargetSequence, n: usize) -> TargetValidity {
    let mut tracker = StructureTracker::new(n);
    for t in seq.tokens() {
        tracker.push(t);
    }
    tracker.finish()
}

/// Rebuild the tree from a rooted, well-formed sequence.
pub fn delinearize(seq: &TargetSequence, utterance: &Utterance) -> Result<ParseTree> {
    let n = utterance.len();
    if let TargetValidity::Invalid(issue) = validate_target(seq, n) {
        return Err(Error::MalformedTarget {
            position: issue.position,
            reason: issue.to_string(),
        });
    }
    let bad = |position: usize, reason: &str| Error::MalformedTarget {
        position,
        reason: reason.to_owned(),
    };
    let mut stack: Vec<ParseTree> = Vec::new();
    let mut root: Option<ParseTree> = None;
    let mut last_ptr: Option<usize> = None;
    for (pos, tok) in seq.tokens().iter().enumerate() {
        if root.is_some() {
            return Err(bad(pos, "content after root closed"));
        }
        match tok {
            TargetToken::Pointer(i) => {
                let parent = stack
                    .last_mut()
                    .ok_or_else(|| bad(pos, "pointer outside root"))?;
                if last_ptr.is_some_and(|p| *i <= p) {
                    return Err(bad(pos, "pointers not strictly increasing"));
                }
                last_ptr = Some(*i);
                parent.children.push(Child::Token(*i));
            }
            TargetToken::Concept(key) if key.boundary == Boundary::Begin => {
                stack.push(ParseTree {
                    label: key.label(),
                    children: Vec::new(),
                })
            }
            TargetToken::Concept(_) => {
                // validation guarantees a matching open bracket
                let node = stack.pop().ok_or_else(|| bad(pos, "unbalanced"))?;
                match stack.last_mut() {
                    Some(parent) => parent.children.push(Child::Node(node)),
                    None => root = Some(node),
                }
            }
        }
    }
    root.ok_or_else(|| bad(seq.len(), "no root bracket"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parse::tokenize_utterance;
    use crate::parse::tree::fixtures::*;

    pub const DISTANCE_TARGET: &str = "[IN:GET_DISTANCE @ptr_0 @ptr_1 @ptr_2 [SL:DESTINATION [IN:GET_RESTAURANT_LOCATION @ptr_3 [SL:TYPE_FOOD @ptr_4 SL:TYPE_FOOD] @ptr_5 IN:GET_RESTAURANT_LOCATION] SL:DESTINATION] IN:GET_DISTANCE]";

    fn seq(s: &str) -> TargetSequence {
        s.parse().unwrap()
    }

    #[test]
    fn linearize_examples() {
        let u = tokenize_utterance("How far is the coffee shop").unwrap();
        assert_eq!(linearize(&distance_tree(), &u).unwrap(), seq(DISTANCE_TARGET));
        let x = tokenize_utterance("x").unwrap();
        let t = ParseTree::new("IN:A", vec![Child::Token(0)]);
        assert_eq!(linearize(&t, &x).unwrap(), seq("[IN:A @ptr_0 IN:A]"));
        let xy = tokenize_utterance("x y").unwrap();
        assert_eq!(
            linearize(&a_b_tree(), &xy).unwrap(),
            seq("[IN:A [SL:B @ptr_0 SL:B] @ptr_1 IN:A]")
        );
        assert!(matches!(
            linearize(&a_b_tree(), &x),
            Err(Error::PointerRange { index: 1, len: 1 })
        ));
    }

    #[test]
    fn delinearize_examples() {
        let u = tokenize_utterance("How far is the coffee shop").unwrap();
        assert_eq!(delinearize(&seq(DISTANCE_TARGET), &u).unwrap(), distance_tree());
        let x = tokenize_utterance("x").unwrap();
        assert_eq!(
            delinearize(&seq("[IN:A @ptr_0 IN:A]"), &x).unwrap(),
            ParseTree::new("IN:A", vec![Child::Token(0)])
        );
        let xy = tokenize_utterance("x y").unwrap();
        let err = delinearize(&seq("[IN:A [SL:B @ptr_0 IN:A] @ptr_1 IN:A]"), &xy).unwrap_err();
        assert!(matches!(err, Error::MalformedTarget { position: 3, .. }), "{err}");
    }

    #[test]
    fn delinearize_rejects_non_trees() {
        let xy = tokenize_utterance("x y").unwrap();
        for (s, pos) in [
            ("@ptr_0 [IN:A @ptr_1 IN:A]", 0),
            ("[IN:A @ptr_1 @ptr_0 IN:A]", 2),
            ("[IN:A @ptr_0 IN:A] [IN:B @ptr_1 IN:B]", 3),
            ("", 0),
        ] {
            match delinearize(&seq(s), &xy) {
                Err(Error::MalformedTarget { position, .. }) => assert_eq!(position, pos, "{s}"),
                other => panic!("{s}: {other:?}"),
            }
        }
    }

    #[test]
    fn validate_rejects_what_linearize_cannot_emit() {
        let issue = |s: &str| match validate_target(&seq(s), 6) {
            TargetValidity::Invalid(i) => (i.kind, i.position),
            TargetValidity::Valid => panic!("{s} accepted"),
        };
        assert_eq!(issue("@ptr_5"), (IssueKind::PointerRange, 1));
        assert_eq!(issue("@ptr_0 [X @ptr_1 [Y @ptr_2 Y] X] @ptr_3 @ptr_4 @ptr_5"), (IssueKind::Unbalanced, 3));
        assert_eq!(issue("[IN:A @ptr_0 IN:A] @ptr_1"), (IssueKind::Unbalanced, 3));
        assert_eq!(issue("[IN:A IN:A] [IN:B IN:B]"), (IssueKind::Unbalanced, 2));
        assert_eq!(issue("[IN:A @ptr_2 @ptr_1 IN:A]"), (IssueKind::PointerRange, 2));
        assert_eq!(issue("[IN:A @ptr_2 @ptr_2 IN:A]"), (IssueKind::PointerRange, 2));
        assert!(!validate_target(&TargetSequence(Vec::new()), 0).is_valid());
        assert!(validate_target(&seq("@ptr_0 [X @ptr_1 @ptr_2 X] @ptr_3 [Y @ptr_4 Y] @ptr_5"), 6).is_valid());
    }

    #[test]
    fn validate_examples() {
        assert_eq!(validate_target(&seq(DISTANCE_TARGET), 6), TargetValidity::Valid);
        assert_eq!(
            validate_target(&seq("[IN:A @ptr_0"), 6),
            TargetValidity::Invalid(TargetIssue {
                kind: IssueKind::Unbalanced,
                position: 2
            })
        );
        assert_eq!(
            validate_target(&seq("[IN:A @ptr_7 IN:A]"), 6),
            TargetValidity::Invalid(TargetIssue {
                kind: IssueKind::PointerRange,
                position: 1
            })
        );
        assert_eq!(
            validate_target(&seq("[IN:A [SL:B @ptr_0 IN:A]"), 6),
            TargetValidity::Invalid(TargetIssue {
                kind: IssueKind::NameMismatch,
                position: 3
            })
        );
        assert_eq!(
            validate_target(&seq("IN:A]"), 6),
            TargetValidity::Invalid(TargetIssue {
                kind: IssueKind::Unbalanced,
                position: 0
            })
        );
    }

    #[test]
    fn tracker_stop_rule() {
        let mut t = StructureTracker::new(3);
        for tok in seq("[IN:A @ptr_0 [SL:B @ptr_1 SL:B]").tokens() {
            t.push(tok);
            assert!(!t.is_complete());
        }
        t.push(&"@ptr_2".parse().unwrap());
        assert!(!t.is_complete());
        t.push(&"IN:A]".parse().unwrap());
        assert!(t.is_complete());

        let mut flat = StructureTracker::new(3);
        for tok in seq("@ptr_0 [Q1 @ptr_1 Q1]").tokens() {
            flat.push(tok);
            assert!(!flat.is_complete());
        }
        flat.push(&TargetToken::Pointer(2));
        assert!(flat.is_complete());
    }
}
