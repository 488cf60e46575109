use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::parse::{ConceptKey, ConceptTag, Label, TargetSequence, TargetToken};
use crate::tensor::{Real, Tensor};

/// Ordered concept tags with a key → row lookup.
#[derive(Clone, Debug, PartialEq)]
pub struct ConceptIndex {
    tags: Vec<ConceptTag>,
    rows: HashMap<ConceptKey, usize>,
}

impl ConceptIndex {
    pub fn new(tags: Vec<ConceptTag>) -> Result<Self> {
        if tags.is_empty() {
            return Err(Error::EmptyDescription);
        }
        let mut rows = HashMap::with_capacity(tags.len());
        for (i, t) in tags.iter().enumerate() {
            if rows.insert(t.key.clone(), i).is_some() {
                return Err(Error::InvalidData(format!("concept {} listed twice", t.key)));
            }
        }
        Ok(ConceptIndex { tags, rows })
    }

    /// Begin and end tags for each label, with rule-based descriptions.
    pub fn for_labels<'a, I: IntoIterator<Item = &'a Label>>(labels: I) -> Result<Self> {
        let mut tags = Vec::new();
        for l in labels {
            tags.push(ConceptTag::naturalized(l.begin())?);
            tags.push(ConceptTag::naturalized(l.end())?);
        }
        Self::new(tags)
    }

    pub fn len(&self) -> usize {
        self.tags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tags.is_empty()
    }

    pub fn tags(&self) -> &[ConceptTag] {
        &self.tags
    }

    pub fn row(&self, key: &ConceptKey) -> Option<usize> {
        self.rows.get(key).copied()
    }

    pub fn contains(&self, key: &ConceptKey) -> bool {
        self.rows.contains_key(key)
    }

    /// Position of `tok` in the `m + n` output layout.
    pub fn output_index(&self, tok: &TargetToken, n: usize) -> Result<usize> {
        match tok {
            TargetToken::Concept(k) => self.row(k).ok_or_else(|| Error::UnknownConcept(k.to_string())),
            TargetToken::Pointer(i) if *i < n => Ok(self.len() + i),
            TargetToken::Pointer(i) => Err(Error::PointerRange { index: *i, len: n }),
        }
    }

    /// Token at output position `index`.
    pub fn token(&self, index: usize) -> TargetToken {
        if index < self.len() {
            TargetToken::Concept(self.tags[index].key.clone())
        } else {
            TargetToken::Pointer(index - self.len())
        }
    }

    /// Row of `tok` in the decoder input table (BOS, pointers, concepts).
    pub fn input_index(&self, tok: &TargetToken, max_source_len: usize) -> Result<usize> {
        match tok {
            TargetToken::Pointer(i) if *i < max_source_len => Ok(1 + i),
            TargetToken::Pointer(i) => Err(Error::PointerRange {
                index: *i,
                len: max_source_len,
            }),
            TargetToken::Concept(k) => self
                .row(k)
                .map(|r| 1 + max_source_len + r)
                .ok_or_else(|| Error::UnknownConcept(k.to_string())),
        }
    }

    /// Teacher-forcing input rows (BOS then the gold prefix) and gold output
    /// indices for a target over an `n`-token source.
    pub fn teacher_rows(
        &self,
        target: &TargetSequence,
        n: usize,
        max_source_len: usize,
    ) -> Result<(Vec<usize>, Vec<usize>)> {
        if target.is_empty() {
            return Err(Error::MalformedTarget {
                position: 0,
                reason: "empty target".into(),
            });
        }
        let mut inputs = Vec::with_capacity(target.len());
        inputs.push(0);
        for tok in &target.tokens()[..target.len() - 1] {
            inputs.push(self.input_index(tok, max_source_len)?);
        }
        let gold = target
            .tokens()
            .iter()
            .map(|t| self.output_index(t, n))
            .collect::<Result<Vec<_>>>()?;
        Ok((inputs, gold))
    }
}

/// Encoded concepts: row `i` of `vectors` belongs to `index.tags()[i]`.
#[derive(Clone, Debug)]
pub struct ConceptBank<T> {
    pub index: ConceptIndex,
    pub vectors: Tensor<T>,
}

impl<T: Real> ConceptBank<T> {
    pub fn m(&self) -> usize {
        self.index.len()
    }

    pub fn tags(&self) -> &[ConceptTag] {
        self.index.tags()
    }

    pub fn vector(&self, key: &ConceptKey) -> Option<&[T]> {
        self.index.row(key).map(|r| self.vectors.row(r))
    }
}

/// A bank frozen together with the decoder input table built from it.
#[derive(Clone, Debug)]
pub struct CompiledDomain<T> {
    pub bank: ConceptBank<T>,
    pub(crate) table: Tensor<T>,
}

impl<T: Real> CompiledDomain<T> {
    pub fn m(&self) -> usize {
        self.bank.m()
    }

    /// Output vocabulary size: concepts plus every pointer slot.
    pub fn output_vocab_size(&self) -> usize {
        // table rows are BOS, N_max pointers, then m concepts
        self.table.rows() - 1
    }

    /// Support of a step distribution for an `n`-token input.
    pub fn support(&self, n: usize) -> usize {
        self.bank.m() + n
    }

    pub fn index(&self) -> &ConceptIndex {
        &self.bank.index
    }
}
