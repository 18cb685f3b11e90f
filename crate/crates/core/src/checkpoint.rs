//! Portable, versioned checkpoint files.
//!
//! Layout, fixed and little-endian:
//!
//! ```text
//! bytes 0..5   magic "EPNT1"
//! bytes 5..9   u32 LE header byte length
//! then         JSON header (format version, architecture config, group
//!              mode, class names, normalization stats, training metadata,
//!              tensor manifest, payload length and SHA-256 digest)
//! then         payload: f32 LE values in manifest order
//! ```
//!
//! The digest covers the payload bytes; it is checked on load and two
//! saves of the same parameters always produce the same digest. The
//! creation timestamp lives in the header only, so it never affects the
//! digest.

use std::fs;
use std::io::Write;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::data::{GroupMode, NormStats};
use crate::model::{build_epilnet, EpilNet, ManifestEntry, ModelConfig, ModelError};

pub const MAGIC: &[u8; 5] = b"EPNT1";
pub const FORMAT_MAJOR: u32 = 1;
pub const FORMAT_MINOR: u32 = 0;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("failed to access {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("bad magic: expected \"EPNT1\", found {found:?}")]
    BadMagic { found: Vec<u8> },
    #[error("unsupported format version {found_major}.{found_minor}; this build reads major {supported}")]
    VersionMismatch {
        found_major: u32,
        found_minor: u32,
        supported: u32,
    },
    #[error("truncated file: expected {expected} more bytes, found {got}")]
    Truncated { expected: usize, got: usize },
    #[error("header is not valid JSON: {0}")]
    HeaderParse(#[from] serde_json::Error),
    #[error("payload digest mismatch: header says {expected}, payload hashes to {computed}")]
    DigestMismatch { expected: String, computed: String },
    #[error("manifest does not match the declared architecture: {reason}")]
    ManifestMismatch { reason: String },
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FormatVersion {
    pub major: u32,
    pub minor: u32,
}

/// Optional training provenance carried in the header.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainMeta {
    pub train_seed: u64,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub split_ratios: (f64, f64, f64),
    pub split_seed: u64,
    pub best_epoch: usize,
    pub validation_accuracy: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub format: FormatVersion,
    pub created_unix_ms: u64,
    pub arch: ModelConfig,
    pub stage_widths: [usize; 4],
    pub stage_repeats: [usize; 4],
    pub group_mode: GroupMode,
    pub class_names: Vec<String>,
    pub normalization: NormStats,
    pub train_meta: Option<TrainMeta>,
    pub manifest: Vec<ManifestEntry>,
    /// Number of f32 values in the payload.
    pub payload_len: usize,
    /// `sha256:<hex>` over the payload bytes.
    pub payload_digest: String,
}

/// In-memory checkpoint: header plus the flat parameter payload.
#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub header: CheckpointHeader,
    pub payload: Vec<f32>,
}

fn payload_bytes(payload: &[f32]) -> Vec<u8> {
    let mut bytes = Vec::with_capacity(payload.len() * 4);
    for v in payload {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    bytes
}

/// `sha256:<hex>` digest of a payload.
pub fn payload_digest(payload: &[f32]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(payload_bytes(payload));
    let out = hasher.finalize();
    let hex: String = out.iter().map(|b| format!("{b:02x}")).collect();
    format!("sha256:{hex}")
}

impl Checkpoint {
    /// Snapshot a model's parameters and running statistics.
    pub fn from_model(
        model: &EpilNet<f32>,
        group_mode: GroupMode,
        class_names: Vec<String>,
        normalization: NormStats,
        train_meta: Option<TrainMeta>,
    ) -> Self {
        let payload = model.gather_values();
        let header = CheckpointHeader {
            format: FormatVersion {
                major: FORMAT_MAJOR,
                minor: FORMAT_MINOR,
            },
            created_unix_ms: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_millis() as u64)
                .unwrap_or(0),
            arch: model.config,
            stage_widths: model.stage_widths,
            stage_repeats: crate::model::STAGE_REPEATS,
            group_mode,
            class_names,
            normalization,
            train_meta,
            manifest: model.param_manifest(),
            payload_len: payload.len(),
            payload_digest: payload_digest(&payload),
        };
        Self { header, payload }
    }

    pub fn digest(&self) -> &str {
        &self.header.payload_digest
    }

    /// Rebuild the model this checkpoint describes. The rebuilt model
    /// produces bit-identical eval-mode logits to the saved one.
    pub fn to_model(&self) -> Result<EpilNet<f32>, CheckpointError> {
        let mut model = build_epilnet::<f32>(
            self.header.arch.class_count,
            self.header.arch.width_multiplier,
            self.header.arch.init_seed,
        )?;
        let expected = model.param_manifest();
        if expected != self.header.manifest {
            return Err(CheckpointError::ManifestMismatch {
                reason: format!(
                    "architecture declares {} tensors, header carries {}",
                    expected.len(),
                    self.header.manifest.len()
                ),
            });
        }
        model.scatter_values(&self.payload)?;
        Ok(model)
    }

    /// Write atomically (temp file + rename). Returns the payload digest.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<String, CheckpointError> {
        let path = path.as_ref();
        let io_err = |source: std::io::Error| CheckpointError::Io {
            path: path.display().to_string(),
            source,
        };

        let header_json = serde_json::to_vec(&self.header)?;
        let mut bytes =
            Vec::with_capacity(9 + header_json.len() + self.payload.len() * 4);
        bytes.extend_from_slice(MAGIC);
        bytes.extend_from_slice(&(header_json.len() as u32).to_le_bytes());
        bytes.extend_from_slice(&header_json);
        bytes.extend_from_slice(&payload_bytes(&self.payload));

        let tmp = path.with_extension(format!("tmp.{}", std::process::id()));
        {
            let mut f = fs::File::create(&tmp).map_err(io_err)?;
            f.write_all(&bytes).map_err(io_err)?;
            f.sync_all().map_err(io_err)?;
        }
        fs::rename(&tmp, path).map_err(io_err)?;
        Ok(self.header.payload_digest.clone())
    }
}

/// Read and fully validate a checkpoint file: magic, version, header,
/// exact payload length, digest.
pub fn load(path: impl AsRef<Path>) -> Result<Checkpoint, CheckpointError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|source| CheckpointError::Io {
        path: path.display().to_string(),
        source,
    })?;

    if bytes.len() < 9 {
        return Err(CheckpointError::Truncated {
            expected: 9,
            got: bytes.len(),
        });
    }
    if &bytes[..5] != MAGIC {
        return Err(CheckpointError::BadMagic {
            found: bytes[..5].to_vec(),
        });
    }
    let header_len = u32::from_le_bytes(bytes[5..9].try_into().unwrap()) as usize;
    if bytes.len() < 9 + header_len {
        return Err(CheckpointError::Truncated {
            expected: 9 + header_len,
            got: bytes.len(),
        });
    }
    let header: CheckpointHeader = serde_json::from_slice(&bytes[9..9 + header_len])?;
    if header.format.major != FORMAT_MAJOR {
        return Err(CheckpointError::VersionMismatch {
            found_major: header.format.major,
            found_minor: header.format.minor,
            supported: FORMAT_MAJOR,
        });
    }

    let payload_bytes_expected = header.payload_len * 4;
    let rest = &bytes[9 + header_len..];
    if rest.len() != payload_bytes_expected {
        return Err(CheckpointError::Truncated {
            expected: payload_bytes_expected,
            got: rest.len(),
        });
    }
    let payload: Vec<f32> = rest
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();

    let computed = payload_digest(&payload);
    if computed != header.payload_digest {
        return Err(CheckpointError::DigestMismatch {
            expected: header.payload_digest.clone(),
            computed,
        });
    }

    Ok(Checkpoint { header, payload })
}
