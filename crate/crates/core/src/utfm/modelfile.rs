use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use super::learn::sha256_hex;
use super::{UtfmModel, MODEL_VERSION};
use crate::json::to_canonical_string;

pub const MODEL_FORMAT: &str = "utfm-model";

#[derive(Debug, Error)]
pub enum ModelFileError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed model file: {0}")]
    Malformed(String),
    #[error("not a model file (format {0:?})")]
    Format(String),
    #[error("unsupported model file version {found} (expected {MODEL_VERSION})")]
    Version { found: u64 },
    #[error("model content hash mismatch: header says {expected}, content hashes to {found}")]
    Hash { expected: String, found: String },
    #[error("invalid model: {0}")]
    Invalid(String),
}

#[derive(Serialize, Deserialize)]
struct Envelope<B> {
    format: String,
    version: u32,
    content_sha256: String,
    body: B,
}

/// Canonical JSON text of a model, wrapped with a format tag, version and a
/// SHA-256 of the canonical body.
pub fn model_to_json(model: &UtfmModel) -> String {
    let body = to_canonical_string(model).expect("model serializes");
    let envelope = Envelope {
        format: MODEL_FORMAT.to_string(),
        version: MODEL_VERSION,
        content_sha256: sha256_hex(body.as_bytes()),
        body: model,
    };
    to_canonical_string(&envelope).expect("model serializes")
}

pub fn model_from_json(text: &str) -> Result<UtfmModel, ModelFileError> {
    let raw: Value = serde_json::from_str(text).map_err(|e| ModelFileError::Malformed(e.to_string()))?;
    let format = raw.get("format").and_then(Value::as_str).unwrap_or_default();
    if format != MODEL_FORMAT {
        return Err(ModelFileError::Format(format.to_string()));
    }
    let version = raw
        .get("version")
        .and_then(Value::as_u64)
        .ok_or_else(|| ModelFileError::Malformed("missing version".into()))?;
    if version != MODEL_VERSION as u64 {
        return Err(ModelFileError::Version { found: version });
    }
    let envelope: Envelope<UtfmModel> =
        serde_json::from_value(raw).map_err(|e| ModelFileError::Malformed(e.to_string()))?;
    let found = sha256_hex(
        to_canonical_string(&envelope.body)
            .expect("model serializes")
            .as_bytes(),
    );
    if found != envelope.content_sha256 {
        return Err(ModelFileError::Hash {
            expected: envelope.content_sha256,
            found,
        });
    }
    envelope
        .body
        .validate()
        .map_err(|e| ModelFileError::Invalid(e.to_string()))?;
    Ok(envelope.body)
}

pub fn save_model(model: &UtfmModel, path: impl AsRef<Path>) -> Result<(), ModelFileError> {
    std::fs::write(path, model_to_json(model))?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<UtfmModel, ModelFileError> {
    model_from_json(&std::fs::read_to_string(path)?)
}
