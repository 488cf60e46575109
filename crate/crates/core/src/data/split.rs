use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::record::{filter_unsupported, DatasetRecord};
use super::topv2::{load_topv2_tsv, LoadReport};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    /// Share of each known domain held back for validation.
    pub valid_fraction: f64,
    /// Share of each domain used as test data when the corpus is one file.
    pub test_fraction: f64,
    pub seed: u64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig {
            valid_fraction: 0.05,
            test_fraction: 0.2,
            seed: 0,
        }
    }
}

/// Train and test records of every domain.
#[derive(Clone, Debug, Default)]
pub struct Corpus {
    pub train: Vec<DatasetRecord>,
    pub test: Vec<DatasetRecord>,
    pub reports: Vec<LoadReport>,
}

impl Corpus {
    pub fn domains(&self) -> BTreeSet<&str> {
        self.train
            .iter()
            .chain(&self.test)
            .map(|r| r.domain.as_str())
            .collect()
    }

    /// Split a single record list into per-domain train and test parts.
    pub fn from_records(records: Vec<DatasetRecord>, test_fraction: f64, seed: u64) -> Self {
        let mut train = Vec::new();
        let mut test = Vec::new();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for (_, mut recs) in group_by_domain(records) {
            recs.shuffle(&mut rng);
            let k = ((recs.len() as f64) * test_fraction).ceil() as usize;
            let k = k.min(recs.len().saturating_sub(1));
            test.extend(recs.drain(..k));
            train.extend(recs);
        }
        Corpus {
            train,
            test,
            reports: Vec::new(),
        }
    }
}

pub(crate) fn group_by_domain(records: Vec<DatasetRecord>) -> BTreeMap<String, Vec<DatasetRecord>> {
    let mut by: BTreeMap<String, Vec<DatasetRecord>> = BTreeMap::new();
    for r in records {
        by.entry(r.domain.clone()).or_default().push(r);
    }
    by
}

fn is_data_file(name: &str) -> bool {
    name.ends_with(".tsv") || name.ends_with(".tsv.gz")
}

/// Load a corpus from a directory of `*train*` / `*test*` TSV files, or from
/// one TSV file split per domain with `cfg.test_fraction`.
pub fn load_corpus(path: &Path, cfg: &SplitConfig) -> Result<Corpus> {
    if !path.is_dir() {
        let (records, report) = load_topv2_tsv(path)?;
        let mut c = Corpus::from_records(records, cfg.test_fraction, cfg.seed);
        c.reports.push(report);
        return Ok(c);
    }
    let mut names: Vec<_> = std::fs::read_dir(path)
        .map_err(|e| Error::io(path, e))?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.file_name().and_then(|n| n.to_str()).is_some_and(is_data_file))
        .collect();
    names.sort();
    let mut corpus = Corpus::default();
    for p in names {
        let name = p.file_name().unwrap().to_string_lossy().to_lowercase();
        let dest = if name.contains("train") {
            &mut corpus.train
        } else if name.contains("test") {
            &mut corpus.test
        } else {
            continue;
        };
        let (records, report) = load_topv2_tsv(&p)?;
        dest.extend(records);
        corpus.reports.push(report);
    }
    if corpus.reports.is_empty() {
        return Err(Error::InvalidData(format!(
            "{}: no *train*/*test* .tsv files found",
            path.display()
        )));
    }
    Ok(corpus)
}

/// Known-domain train/valid sets and the held-out domain's records.
#[derive(Clone, Debug)]
pub struct DomainSplit {
    pub held_out: String,
    pub known_train: Vec<DatasetRecord>,
    pub known_valid: Vec<DatasetRecord>,
    /// All training-side records of the held-out domain (the few-shot pool).
    pub held_out_train: Vec<DatasetRecord>,
    pub held_out_test: Vec<DatasetRecord>,
}

impl DomainSplit {
    pub fn known_domains(&self) -> BTreeSet<&str> {
        self.known_train
            .iter()
            .chain(&self.known_valid)
            .map(|r| r.domain.as_str())
            .collect()
    }

    /// Drop unsupported utterances from every part (zero-shot setting).
    pub fn without_unsupported(self) -> Self {
        DomainSplit {
            held_out: self.held_out,
            known_train: filter_unsupported(self.known_train),
            known_valid: filter_unsupported(self.known_valid),
            held_out_train: filter_unsupported(self.held_out_train),
            held_out_test: filter_unsupported(self.held_out_test),
        }
    }
}

/// Hold out `domain`: every other domain's training records become known
/// data, with `ceil(valid_fraction · count)` per domain kept for validation.
pub fn build_leave_one_out(corpus: &Corpus, domain: &str, cfg: &SplitConfig) -> Result<DomainSplit> {
    if !corpus.domains().contains(domain) {
        return Err(Error::DomainNotFound(domain.to_owned()));
    }
    let (held, known): (Vec<_>, Vec<_>) = corpus.train.iter().cloned().partition(|r| r.domain == domain);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut known_train = Vec::new();
    let mut known_valid = Vec::new();
    for (_, recs) in group_by_domain(known) {
        let mut order: Vec<usize> = (0..recs.len()).collect();
        order.shuffle(&mut rng);
        let k = ((recs.len() as f64) * cfg.valid_fraction).ceil() as usize;
        let k = k.min(recs.len().saturating_sub(1));
        let valid: BTreeSet<usize> = order[..k].iter().copied().collect();
        for (i, r) in recs.into_iter().enumerate() {
            if valid.contains(&i) {
                known_valid.push(r);
            } else {
                known_train.push(r);
            }
        }
    }
    Ok(DomainSplit {
        held_out: domain.to_owned(),
        known_train,
        known_valid,
        held_out_train: held,
        held_out_test: corpus.test.iter().filter(|r| r.domain == domain).cloned().collect(),
    })
}
