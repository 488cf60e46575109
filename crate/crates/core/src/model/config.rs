use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Network shape. Widths are shared by the source encoder, the concept
/// encoder and the decoder.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub d_model: usize,
    pub encoder_layers: usize,
    pub encoder_heads: usize,
    pub decoder_layers: usize,
    pub decoder_heads: usize,
    pub concept_layers: usize,
    pub concept_heads: usize,
    /// Longest accepted utterance; also the size of the pointer table.
    pub max_source_len: usize,
    pub max_target_len: usize,
    /// Description words beyond this are dropped.
    pub max_description_len: usize,
    pub ff_width: usize,
    pub init_std: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            vocab_size: 2,
            d_model: 64,
            encoder_layers: 2,
            encoder_heads: 4,
            decoder_layers: 2,
            decoder_heads: 4,
            concept_layers: 2,
            concept_heads: 4,
            max_source_len: 64,
            max_target_len: 64,
            max_description_len: 16,
            ff_width: 128,
            init_std: 0.02,
        }
    }
}

impl ModelConfig {
    /// A very small configuration for tests.
    pub fn tiny(d_model: usize, layers: usize) -> Self {
        ModelConfig {
            d_model,
            encoder_layers: layers,
            encoder_heads: 2,
            decoder_layers: layers,
            decoder_heads: 2,
            concept_layers: layers,
            concept_heads: 2,
            max_source_len: 16,
            max_target_len: 24,
            max_description_len: 8,
            ff_width: 2 * d_model,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.d_model == 0 || self.ff_width == 0 {
            return bad("d_model and ff_width must be positive".into());
        }
        for (what, h) in [
            ("encoder_heads", self.encoder_heads),
            ("decoder_heads", self.decoder_heads),
            ("concept_heads", self.concept_heads),
        ] {
            if h == 0 || !self.d_model.is_multiple_of(h) {
                return bad(format!("d_model {} not divisible by {what} {h}", self.d_model));
            }
        }
        if self.max_source_len == 0 || self.max_target_len == 0 || self.max_description_len == 0 {
            return bad("length limits must be positive".into());
        }
        if self.vocab_size < 2 {
            return bad("vocabulary needs at least the two reserved words".into());
        }
        Ok(())
    }
}
