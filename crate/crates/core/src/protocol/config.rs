use serde::{Deserialize, Serialize};

use crate::data::SplitConfig;
use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::tensor::Precision;
use crate::train::TrainConfig;

/// Headline metric of a manifest or table.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricKind {
    #[default]
    Em,
    F1,
}

impl std::fmt::Display for MetricKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            MetricKind::Em => "EM",
            MetricKind::F1 => "F1",
        })
    }
}

impl std::str::FromStr for MetricKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "em" => Ok(MetricKind::Em),
            "f1" => Ok(MetricKind::F1),
            other => Err(format!("unknown metric {other:?} (expected em|f1)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProtocolConfig {
    pub beam: usize,
    pub seeds: Vec<u64>,
    /// Samples per intent/slot for few-shot runs.
    pub spi: usize,
    pub pretrain: bool,
    pub metric: MetricKind,
    pub precision: Precision,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        ProtocolConfig {
            beam: 4,
            seeds: vec![1, 2, 3],
            spi: 1,
            pretrain: true,
            metric: MetricKind::Em,
            precision: Precision::Single,
        }
    }
}

/// Everything a run depends on besides data.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelConfig,
    pub training: TrainConfig,
    pub split: SplitConfig,
    pub protocol: ProtocolConfig,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.training.validate()?;
        let mut m = self.model.clone();
        m.vocab_size = m.vocab_size.max(2);
        m.validate()?;
        if self.protocol.beam == 0 {
            return Err(Error::Config("beam must be at least 1".into()));
        }
        if self.protocol.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        if self.protocol.spi == 0 {
            return Err(Error::Config("spi must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.split.valid_fraction) || !(0.0..1.0).contains(&self.split.test_fraction) {
            return Err(Error::Config("split fractions must lie in [0, 1)".into()));
        }
        Ok(())
    }

    /// Training settings for one seed of a run.
    pub fn training_for(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            seed,
            ..self.training.clone()
        }
    }
}
