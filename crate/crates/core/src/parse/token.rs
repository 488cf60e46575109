//! Utterances, concept tags and target tokens.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// A whitespace-tokenized source utterance.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Utterance {
    tokens: Vec<String>,
    raw: String,
}

impl Utterance {
    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn raw(&self) -> &str {
        &self.raw
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Whitespace-normalized text: tokens joined by single spaces.
    pub fn text(&self) -> String {
        self.tokens.join(" ")
    }
}

impl fmt::Display for Utterance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.tokens.join(" "))
    }
}

/// Split `raw` into maximal runs of non-whitespace characters.
pub fn tokenize_utterance(raw: &str) -> Result<Utterance> {
    let tokens: Vec<String> = raw.split_whitespace().map(str::to_owned).collect();
    if tokens.is_empty() {
        return Err(Error::EmptyUtterance);
    }
    Ok(Utterance {
        tokens,
        raw: raw.to_owned(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConceptKind {
    Intent,
    Slot,
    OpenType,
}

impl ConceptKind {
    /// Kind implied by a tag name's prefix (`IN:` / `SL:`); anything else is open-type.
    pub fn from_name(name: &str) -> Self {
        if name.starts_with("IN:") {
            ConceptKind::Intent
        } else if name.starts_with("SL:") {
            ConceptKind::Slot
        } else {
            ConceptKind::OpenType
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Boundary {
    Begin,
    End,
}

/// A boundary-free intent/slot/type label, as carried by parse-tree nodes.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Label {
    pub name: String,
    pub kind: ConceptKind,
}

impl Label {
    pub fn new(name: impl Into<String>) -> Self {
        let name = name.into();
        let kind = ConceptKind::from_name(&name);
        Label { name, kind }
    }

    pub fn begin(&self) -> ConceptKey {
        ConceptKey {
            name: self.name.clone(),
            kind: self.kind,
            boundary: Boundary::Begin,
        }
    }

    pub fn end(&self) -> ConceptKey {
        ConceptKey {
            name: self.name.clone(),
            kind: self.kind,
            boundary: Boundary::End,
        }
    }
}

/// One concept token of the output vocabulary: a label plus its boundary.
///
/// Renders as `[NAME` for begin and `NAME]` for end.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ConceptKey {
    pub name: String,
    pub kind: ConceptKind,
    pub boundary: Boundary,
}

impl ConceptKey {
    pub fn label(&self) -> Label {
        Label {
            name: self.name.clone(),
            kind: self.kind,
        }
    }

    pub fn matches(&self, other: &ConceptKey) -> bool {
        self.name == other.name && self.kind == other.kind
    }
}

impl fmt::Display for ConceptKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.boundary {
            Boundary::Begin => write!(f, "[{}", self.name),
            Boundary::End => write!(f, "{}]", self.name),
        }
    }
}

fn valid_name(name: &str) -> bool {
    !name.is_empty()
        && !name
            .chars()
            .any(|c| c.is_whitespace() || c == '[' || c == ']')
}

impl FromStr for ConceptKey {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (name, boundary) = if let Some(rest) = s.strip_prefix('[') {
            (rest, Boundary::Begin)
        } else if let Some(rest) = s.strip_suffix(']') {
            (rest, Boundary::End)
        } else {
            return Err(Error::UnknownTagFormat(s.to_owned()));
        };
        if !valid_name(name) {
            return Err(Error::UnknownTagFormat(s.to_owned()));
        }
        Ok(ConceptKey {
            name: name.to_owned(),
            kind: ConceptKind::from_name(name),
            boundary,
        })
    }
}

/// A concept key together with its naturalized description.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ConceptTag {
    pub key: ConceptKey,
    pub description: String,
}

impl ConceptTag {
    /// Tag for an intent/slot key with the rule-based description.
    pub fn naturalized(key: ConceptKey) -> Result<Self> {
        let description = super::naturalize::naturalize_key(&key, None)?;
        Ok(ConceptTag { key, description })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TargetToken {
    /// Copy the source token at this 0-based position.
    Pointer(usize),
    Concept(ConceptKey),
}

impl TargetToken {
    pub fn concept(&self) -> Option<&ConceptKey> {
        match self {
            TargetToken::Concept(k) => Some(k),
            TargetToken::Pointer(_) => None,
        }
    }
}

impl fmt::Display for TargetToken {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TargetToken::Pointer(i) => write!(f, "@ptr_{i}"),
            TargetToken::Concept(k) => k.fmt(f),
        }
    }
}

impl FromStr for TargetToken {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if let Some(idx) = s.strip_prefix("@ptr_") {
            return idx
                .parse::<usize>()
                .map(TargetToken::Pointer)
                .map_err(|_| Error::UnknownTagFormat(s.to_owned()));
        }
        s.parse().map(TargetToken::Concept)
    }
}

/// A linearized parse: concept tokens and source pointers.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TargetSequence(pub Vec<TargetToken>);

impl TargetSequence {
    pub fn tokens(&self) -> &[TargetToken] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn to_strings(&self) -> Vec<String> {
        self.0.iter().map(ToString::to_string).collect()
    }

    pub fn from_strings<S: AsRef<str>>(tokens: &[S]) -> Result<Self> {
        tokens
            .iter()
            .map(|t| t.as_ref().parse())
            .collect::<Result<Vec<_>>>()
            .map(TargetSequence)
    }

    /// Distinct concept keys in first-appearance order.
    pub fn concepts(&self) -> Vec<ConceptKey> {
        let mut out: Vec<ConceptKey> = Vec::new();
        for k in self.0.iter().filter_map(TargetToken::concept) {
            if !out.contains(k) {
                out.push(k.clone());
            }
        }
        out
    }
}

impl fmt::Display for TargetSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, t) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            t.fmt(f)?;
        }
        Ok(())
    }
}

impl FromStr for TargetSequence {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split_whitespace().collect();
        TargetSequence::from_strings(&parts)
    }
}

impl Serialize for TargetSequence {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_strings().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for TargetSequence {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let raw = Vec::<String>::deserialize(deserializer)?;
        TargetSequence::from_strings(&raw).map_err(serde::de::Error::custom)
    }
}

impl Serialize for ConceptKey {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ConceptKey {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let raw = String::deserialize(deserializer)?;
        raw.parse().map_err(serde::de::Error::custom)
    }
}
