//! Model file container.
//!
//! Layout: 8-byte magic, little-endian `u32` format version, little-endian
//! `u64` payload length, 32-byte SHA-256 of the payload, then the payload as
//! CBOR. Floats are stored as IEEE doubles, so a loaded ensemble classifies
//! exactly like the one that was saved.

use bootdes::data::Attribute;
use bootdes::ensemble::TrainedEnsemble;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;
use thiserror::Error;

pub const MAGIC: &[u8; 8] = b"BOOTDES\0";
pub const FORMAT_VERSION: u32 = 1;
const HEADER_LEN: usize = 8 + 4 + 8 + 32;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("not a model file (bad magic header)")]
    BadMagic,
    #[error("unsupported version {found} (this build reads version {supported})", supported = FORMAT_VERSION)]
    UnsupportedVersion { found: u32 },
    #[error("truncated model file: expected {expected} payload bytes, found {found}")]
    Truncated { expected: u64, found: u64 },
    #[error("checksum mismatch")]
    ChecksumMismatch,
    #[error("cannot decode model payload: {0}")]
    Decode(String),
    #[error("cannot encode model payload: {0}")]
    Encode(String),
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

/// Everything `predict` needs besides the query rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub ensemble: TrainedEnsemble,
    /// Raw feature schema the pipeline expects, class column excluded.
    pub schema: Vec<Attribute>,
    pub class_names: Vec<String>,
    /// Settings the model was trained with.
    pub settings: BTreeMap<String, String>,
}

impl ModelFile {
    pub fn to_bytes(&self) -> Result<Vec<u8>, ModelError> {
        let mut payload = Vec::new();
        ciborium::into_writer(self, &mut payload).map_err(|e| ModelError::Encode(e.to_string()))?;
        let mut out = Vec::with_capacity(HEADER_LEN + payload.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
        out.extend_from_slice(&Sha256::digest(&payload));
        out.extend_from_slice(&payload);
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ModelError> {
        if bytes.len() < 8 || &bytes[..8] != MAGIC {
            return Err(ModelError::BadMagic);
        }
        if bytes.len() < HEADER_LEN {
            return Err(ModelError::Truncated {
                expected: HEADER_LEN as u64,
                found: bytes.len() as u64,
            });
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
        if version != FORMAT_VERSION {
            return Err(ModelError::UnsupportedVersion { found: version });
        }
        let length = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes"));
        let payload = &bytes[HEADER_LEN..];
        if payload.len() as u64 != length {
            return Err(ModelError::Truncated {
                expected: length,
                found: payload.len() as u64,
            });
        }
        if Sha256::digest(payload).as_slice() != &bytes[20..52] {
            return Err(ModelError::ChecksumMismatch);
        }
        ciborium::from_reader(payload).map_err(|e| ModelError::Decode(e.to_string()))
    }

    /// Writes atomically: a temporary file in the target directory is
    /// renamed over `path` once complete.
    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        write_atomic(path, &self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, ModelError> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

/// Replaces `path` with `contents` so readers never see a partial file.
pub fn write_atomic(path: &Path, contents: &[u8]) -> std::io::Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(contents)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}
