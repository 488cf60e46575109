use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const UNK: usize = 0;
pub const CLS: usize = 1;
const RESERVED: [&str; 2] = ["<unk>", "<cls>"];

/// Word vocabulary shared by utterances and concept descriptions.
///
/// Lookups are case-insensitive; unseen words map to [`UNK`].
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct Vocab {
    words: Vec<String>,
    index: HashMap<String, usize>,
}

impl From<Vec<String>> for Vocab {
    fn from(words: Vec<String>) -> Self {
        let index = words.iter().enumerate().map(|(i, w)| (w.clone(), i)).collect();
        Vocab { words, index }
    }
}

impl From<Vocab> for Vec<String> {
    fn from(v: Vocab) -> Self {
        v.words
    }
}

impl Default for Vocab {
    fn default() -> Self {
        Vocab::from(RESERVED.iter().map(|s| s.to_string()).collect::<Vec<_>>())
    }
}

impl Vocab {
    /// Reserved words followed by every distinct word, sorted.
    pub fn build<I, S>(words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut v = Vocab::default();
        v.extend(words);
        v
    }

    /// Append unseen words (sorted) and return how many were added.
    pub fn extend<I, S>(&mut self, words: I) -> usize
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let fresh: BTreeSet<String> = words
            .into_iter()
            .map(|w| w.as_ref().to_lowercase())
            .filter(|w| !self.index.contains_key(w))
            .collect();
        let added = fresh.len();
        for w in fresh {
            self.index.insert(w.clone(), self.words.len());
            self.words.push(w);
        }
        added
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn id(&self, word: &str) -> usize {
        match self.index.get(word) {
            Some(&i) => i,
            None => self.index.get(&word.to_lowercase()).copied().unwrap_or(UNK),
        }
    }

    pub fn word(&self, id: usize) -> &str {
        &self.words[id]
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    /// Hex SHA-256 over the word list.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        for w in &self.words {
            h.update(w.as_bytes());
            h.update(b"\n");
        }
        hex(&h.finalize())
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
