use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, MetricKind};
use crate::data::{fingerprint_records, DatasetRecord};
use crate::error::{Error, Result};
use crate::eval::EvalReport;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProtocolKind {
    ZeroShot,
    FewShot,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Protocol {
    pub kind: ProtocolKind,
    pub held_out: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub spi: Option<usize>,
    pub seeds: Vec<u64>,
    pub pretrained: bool,
}

impl Protocol {
    /// Row name in result tables.
    pub fn variant(&self) -> String {
        let mut name = String::from("concept-seq2seq");
        if !self.pretrained {
            name.push_str(" w/o pretraining");
        }
        if let Some(k) = self.spi {
            name.push_str(&format!(" spi={k}"));
        }
        name
    }
}

/// Content hashes of every record set a run touched.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Fingerprints {
    pub known_train: String,
    pub known_valid: String,
    pub held_out_train: String,
    pub held_out_test: String,
    /// Few-shot subset per seed.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub few_shot: BTreeMap<u64, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pretrain: Option<String>,
    pub vocab: String,
}

/// Evidence that the held-out domain did not leak into training.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Hygiene {
    /// Records in known-domain training or validation data whose fingerprint
    /// matches a held-out-domain record, or whose domain is the held-out one.
    pub held_out_in_training: usize,
    /// Same check against the rehearsal pool (few-shot only).
    pub held_out_in_rehearsal: usize,
    /// Few-shot records that are also held-out test records.
    pub test_in_few_shot: usize,
    pub unsupported_filtered: bool,
    pub unsupported_in_train: usize,
    pub unsupported_in_test: usize,
}

fn record_hash(r: &DatasetRecord) -> String {
    fingerprint_records(std::iter::once(r))
}

pub(crate) fn hash_set(records: &[DatasetRecord]) -> BTreeSet<String> {
    records.iter().map(record_hash).collect()
}

/// Records of `pool` that belong to `domain` or hash into `forbidden`.
pub(crate) fn count_leaks(pool: &[DatasetRecord], domain: &str, forbidden: &BTreeSet<String>) -> usize {
    pool.iter()
        .filter(|r| r.domain == domain || forbidden.contains(&record_hash(r)))
        .count()
}

pub(crate) fn count_unsupported(records: &[DatasetRecord]) -> usize {
    records.iter().filter(|r| r.tree.label.name.contains("UNSUPPORTED")).count()
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub em: f64,
    pub f1: f64,
    pub validity: f64,
}

impl Metrics {
    pub fn get(&self, kind: MetricKind) -> f64 {
        match kind {
            MetricKind::Em => self.em,
            MetricKind::F1 => self.f1,
        }
    }

    pub fn mean(items: &[Metrics]) -> Metrics {
        let n = items.len().max(1) as f64;
        Metrics {
            em: items.iter().map(|m| m.em).sum::<f64>() / n,
            f1: items.iter().map(|m| m.f1).sum::<f64>() / n,
            validity: items.iter().map(|m| m.validity).sum::<f64>() / n,
        }
    }
}

impl From<&EvalReport> for Metrics {
    fn from(r: &EvalReport) -> Self {
        Metrics {
            em: r.em,
            f1: r.f1,
            validity: r.validity,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedRun {
    pub seed: u64,
    pub metrics: Metrics,
    pub test_examples: usize,
    pub train_epochs: usize,
    pub best_valid: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub few_shot_size: Option<usize>,
}

/// Complete, deterministic record of one protocol run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub protocol: Protocol,
    pub metric: MetricKind,
    pub config: ExperimentConfig,
    pub fingerprints: Fingerprints,
    pub hygiene: Hygiene,
    pub runs: Vec<SeedRun>,
    pub average: Metrics,
}

impl RunManifest {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        crate::io::write_atomic(path, self.to_json().as_bytes())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    /// No held-out record reached a training or rehearsal batch.
    pub fn is_clean(&self) -> bool {
        self.hygiene.held_out_in_training == 0
            && self.hygiene.held_out_in_rehearsal == 0
            && self.hygiene.test_in_few_shot == 0
    }
}
