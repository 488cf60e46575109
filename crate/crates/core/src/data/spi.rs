use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::record::DatasetRecord;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpiConfig {
    pub k: usize,
    pub seed: u64,
}

/// Greedy randomized covering: scan the records in a seeded shuffle and keep
/// one whenever it carries a label still seen fewer than `k` times. Every
/// label ends up covered by at least `min(k, frequency)` kept records.
///
/// Kept records are returned in their original order.
pub fn sample_spi(records: &[DatasetRecord], cfg: SpiConfig) -> Vec<DatasetRecord> {
    assert!(cfg.k >= 1, "SPI k must be at least 1");
    let mut order: Vec<usize> = (0..records.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(cfg.seed));
    let mut counts: HashMap<&str, usize> = HashMap::new();
    let mut keep = vec![false; records.len()];
    for i in order {
        let labels = records[i].labels();
        if labels.iter().any(|l| counts.get(l.name.as_str()).copied().unwrap_or(0) < cfg.k) {
            keep[i] = true;
            for l in labels {
                *counts.entry(l.name.as_str()).or_default() += 1;
            }
        }
    }
    records
        .iter()
        .zip(keep)
        .filter(|&(_r, k)| k).map(|(r, _k)| r.clone())
        .collect()
}
