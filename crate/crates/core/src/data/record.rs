use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::Result;
use crate::parse::{linearize, parse_seqlogical, tokenize_utterance, Label, ParseTree, TargetSequence, Utterance};

/// One annotated utterance of a domain.
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetRecord {
    pub domain: String,
    pub utterance: Utterance,
    pub tree: ParseTree,
    pub target: TargetSequence,
}

/// Canonical serialized form used for outcome logs and fingerprints.
#[derive(Serialize, Deserialize)]
struct Canonical<'a> {
    domain: &'a str,
    utterance: String,
    target: String,
}

impl DatasetRecord {
    pub fn new(domain: impl Into<String>, utterance: Utterance, tree: ParseTree) -> Result<Self> {
        let target = linearize(&tree, &utterance)?;
        Ok(DatasetRecord {
            domain: domain.into(),
            utterance,
            tree,
            target,
        })
    }

    /// Parse a bracketed annotation over `utterance`.
    pub fn from_annotation(domain: &str, utterance: &str, annotation: &str) -> Result<Self> {
        let utt = tokenize_utterance(utterance)?;
        let tree = parse_seqlogical(annotation, &utt)?;
        Self::new(domain, utt, tree)
    }

    /// Distinct labels of the tree, each once.
    pub fn labels(&self) -> BTreeSet<&Label> {
        self.tree.labels().into_iter().collect()
    }

    pub fn canonical_json(&self) -> String {
        serde_json::to_string(&Canonical {
            domain: &self.domain,
            utterance: self.utterance.text(),
            target: self.target.to_string(),
        })
        .expect("plain strings serialize")
    }
}

/// Drop records whose root intent is marked unsupported.
pub fn filter_unsupported(records: Vec<DatasetRecord>) -> Vec<DatasetRecord> {
    records
        .into_iter()
        .filter(|r| !r.tree.label.name.contains("UNSUPPORTED"))
        .collect()
}

/// Every label used by `records`, sorted.
pub fn domain_labels<'a, I: IntoIterator<Item = &'a DatasetRecord>>(records: I) -> Vec<Label> {
    let set: BTreeSet<Label> = records
        .into_iter()
        .flat_map(|r| r.tree.labels().into_iter().cloned())
        .collect();
    set.into_iter().collect()
}

/// Hex SHA-256 of the canonical JSON lines of `records`, in order.
pub fn fingerprint_records<'a, I: IntoIterator<Item = &'a DatasetRecord>>(records: I) -> String {
    let mut h = Sha256::new();
    for r in records {
        h.update(r.canonical_json().as_bytes());
        h.update(b"\n");
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}
