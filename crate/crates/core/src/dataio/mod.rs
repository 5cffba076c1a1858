//! Files in and out: dataset manifests (native and VQA layout), the QVFT
//! feature format, the QSMD model format, run configuration and run
//! snapshots.

mod binary;
mod config;
mod manifest;
mod vqa;

use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;

pub use binary::{
    decode_features, decode_model, encode_features, encode_model, load_features, load_model,
    save_features, save_model, FEATURE_MAGIC, FEATURE_VERSION, MODEL_MAGIC, MODEL_VERSION,
};
pub use config::{Modes, RunConfig, RunPaths, CONFIG_ENV};
pub use manifest::{load_dataset, parse_dataset, save_dataset, DatasetManifest, ImageEntry};
pub use vqa::{load_vqa, parse_vqa};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("cannot access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}:{column}: {message}")]
    Parse {
        path: String,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("question {question} refers to unknown image {image}")]
    DanglingReference { question: u64, image: u64 },
    #[error("duplicate {kind} id {id}")]
    DuplicateId { kind: &'static str, id: u64 },
    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },
    #[error("unsupported version {found} (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("file is truncated: need {needed} bytes, have {have}")]
    TruncatedFile { needed: usize, have: usize },
    #[error("invalid data: {0}")]
    Invalid(String),
    #[error("config error: {0}")]
    Config(String),
}

impl DataError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        DataError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub(crate) fn json(path: &str, e: serde_json::Error) -> Self {
        DataError::Parse {
            path: path.to_string(),
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        }
    }
}

pub(crate) fn read_file(path: &Path) -> Result<Vec<u8>, DataError> {
    std::fs::read(path).map_err(|e| DataError::io(path, e))
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<(), DataError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| DataError::io(dir, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| DataError::io(path, e))
}

/// Serialize items as newline-delimited JSON.
pub fn write_jsonl<T: Serialize>(path: &Path, items: impl IntoIterator<Item = T>) -> Result<(), DataError> {
    let mut out = String::new();
    for item in items {
        out.push_str(&serde_json::to_string(&item).map_err(|e| DataError::Invalid(e.to_string()))?);
        out.push('\n');
    }
    write_file(path, out.as_bytes())
}

/// Parse newline-delimited JSON; blank lines are skipped.
pub fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>, DataError> {
    let text = String::from_utf8(read_file(path)?)
        .map_err(|e| DataError::Invalid(format!("{}: {e}", path.display())))?;
    let name = path.display().to_string();
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let item = serde_json::from_str(line).map_err(|e| DataError::Parse {
            path: name.clone(),
            line: i + 1,
            column: e.column(),
            message: e.to_string(),
        })?;
        out.push(item);
    }
    Ok(out)
}

#[derive(Debug, Serialize)]
struct Snapshot<'a, C: Serialize> {
    subcommand: &'a str,
    version: &'a str,
    seed: Option<u64>,
    config: C,
}

/// Write `<dir>/<subcommand>.run.json` recording the seed and the full
/// effective configuration of a run.
pub fn write_run_snapshot<C: Serialize>(
    dir: &Path,
    subcommand: &str,
    seed: Option<u64>,
    config: C,
) -> Result<PathBuf, DataError> {
    let snap = Snapshot {
        subcommand,
        version: env!("CARGO_PKG_VERSION"),
        seed,
        config,
    };
    let path = dir.join(format!("{subcommand}.run.json"));
    let text = serde_json::to_string_pretty(&snap).map_err(|e| DataError::Invalid(e.to_string()))?;
    write_file(&path, format!("{text}\n").as_bytes())?;
    Ok(path)
}
