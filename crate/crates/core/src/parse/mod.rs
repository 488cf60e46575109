//! Canonical parse representation and pointer linearization.

mod linearize;
mod naturalize;
mod seqlogical;
mod token;
mod tree;

pub use linearize::{
    delinearize, linearize, validate_target, IssueKind, StructureTracker, TargetIssue,
    TargetValidity,
};
pub use naturalize::{naturalize_key, naturalize_tag};
pub use seqlogical::{parse_seqlogical, to_seqlogical};
pub use token::{
    tokenize_utterance, Boundary, ConceptKey, ConceptKind, ConceptTag, Label, TargetSequence,
    TargetToken, Utterance,
};
pub use tree::{extract_labeled_spans, Child, LabeledSpan, ParseTree};
