use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;

/// One line of the training metrics log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub phase: String,
    pub epoch: usize,
    pub step: u64,
    pub loss: f64,
    pub lr: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub valid: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct MetricsLog {
    pub rows: Vec<MetricRow>,
}

impl MetricsLog {
    pub fn push(&mut self, phase: &str, epoch: usize, step: u64, loss: f64, lr: f64, valid: Option<f64>) {
        log::debug!("{phase} epoch {epoch} step {step} loss {loss:.5} lr {lr:.3e} valid {valid:?}");
        self.rows.push(MetricRow {
            phase: phase.to_owned(),
            epoch,
            step,
            loss,
            lr,
            valid,
        });
    }

    pub fn losses(&self, phase: &str) -> Vec<f64> {
        self.rows.iter().filter(|r| r.phase == phase).map(|r| r.loss).collect()
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        crate::io::write_jsonl(path, &self.rows)
    }
}
