use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::network::build_params;
use super::vocab::hex;
use super::{ConceptSeq2Seq, ModelConfig, Vocab};
use crate::error::{Error, Result};
use crate::parse::ConceptTag;
use crate::tensor::{checkpoint, Precision, Real};

/// JSON metadata stored next to a binary parameter file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub config: ModelConfig,
    pub precision: Precision,
    pub vocab_hash: String,
    pub params_sha256: String,
    /// Concepts the model was trained against.
    pub bank: Vec<ConceptTag>,
    pub vocab: Vocab,
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex(&Sha256::digest(bytes))
}

/// Write `path` (parameters) and `path.json` (metadata).
pub fn save_checkpoint<T: Real>(model: &ConceptSeq2Seq<T>, bank: &[ConceptTag], path: &Path) -> Result<Sidecar> {
    let bytes = checkpoint::encode_params(model.params());
    let meta = Sidecar {
        config: model.config().clone(),
        precision: T::PRECISION,
        vocab_hash: model.vocab().fingerprint(),
        params_sha256: sha256_hex(&bytes),
        bank: bank.to_vec(),
        vocab: model.vocab().clone(),
    };
    crate::io::write_atomic(path, &bytes)?;
    crate::io::write_json(&sidecar_path(path), &meta)?;
    Ok(meta)
}

pub fn read_sidecar(path: &Path) -> Result<Sidecar> {
    let sp = sidecar_path(path);
    let text = std::fs::read_to_string(&sp).map_err(|e| Error::io(&sp, e))?;
    Ok(serde_json::from_str(&text)?)
}

/// Load a checkpoint at precision `T`, verifying both hashes.
pub fn load_checkpoint<T: Real>(path: &Path) -> Result<(ConceptSeq2Seq<T>, Sidecar)> {
    let meta = read_sidecar(path)?;
    if meta.vocab.fingerprint() != meta.vocab_hash || meta.config.vocab_size != meta.vocab.len() {
        return Err(Error::Incompatible(format!(
            "{}: vocabulary does not match its recorded hash",
            path.display()
        )));
    }
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if sha256_hex(&bytes) != meta.params_sha256 {
        return Err(Error::Incompatible(format!(
            "{}: parameter file hash differs from metadata",
            path.display()
        )));
    }
    meta.config.validate()?;
    let (mut params, ids) = build_params::<T>(&meta.config, 0);
    checkpoint::load_into(&mut params, &bytes)?;
    let model = ConceptSeq2Seq::from_parts(meta.config.clone(), meta.vocab.clone(), params, ids);
    Ok((model, meta))
}
