//! Run manifests: everything an evaluation run read and produced, persisted
//! so the run can be audited and re-scored without re-querying the model.
//!
//! Directory layout: `config.json` (the manifest proper), `samples.jsonl`
//! (the scored samples), `raw_outputs.jsonl` (one record per sample with the
//! verbatim model output), and `report.json` (written by scoring).

use crate::jsonl::{self, JsonlError};
use crate::model::Sample;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fs;
use std::path::{Path, PathBuf};
use thiserror::Error;

pub const CONFIG_FILE: &str = "config.json";
pub const SAMPLES_FILE: &str = "samples.jsonl";
pub const RAW_OUTPUTS_FILE: &str = "raw_outputs.jsonl";
pub const REPORT_FILE: &str = "report.json";

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("bad json in {path}: {message}")]
    BadJson { path: PathBuf, message: String },
    #[error(transparent)]
    Jsonl(#[from] JsonlError),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ManifestError + '_ {
    move |source| ManifestError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Where the raw outputs came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PredictionSource {
    Endpoint { url: String },
    File { path: String, sha256: String },
    Identity,
}

/// The manifest proper, stored as `config.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub toolkit_version: String,
    pub created_at: String,
    pub seed: u64,
    pub strict_parse: bool,
    /// Path and content digest of the input dataset.
    pub dataset_path: String,
    pub dataset_sha256: String,
    pub predictions: PredictionSource,
    /// Digest of the endpoint or run configuration, when one was supplied.
    pub config_sha256: Option<String>,
}

impl RunManifest {
    pub fn new(
        run_id: impl Into<String>,
        seed: u64,
        strict_parse: bool,
        dataset_path: impl Into<String>,
        dataset_sha256: impl Into<String>,
        predictions: PredictionSource,
    ) -> Self {
        Self {
            run_id: run_id.into(),
            toolkit_version: env!("CARGO_PKG_VERSION").to_string(),
            created_at: chrono::Utc::now().to_rfc3339(),
            seed,
            strict_parse,
            dataset_path: dataset_path.into(),
            dataset_sha256: dataset_sha256.into(),
            predictions,
            config_sha256: None,
        }
    }
}

/// One sample's raw model output plus what the parser said about it. The
/// output is stored verbatim, before any parsing or repair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawOutputRecord {
    pub id: String,
    pub prompt_sha256: String,
    pub output: Option<String>,
    pub error: Option<String>,
    #[serde(default)]
    pub diagnostics: Vec<String>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn sha256_file(path: &Path) -> Result<String, ManifestError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    Ok(sha256_hex(&bytes))
}

/// Write the manifest, samples, and raw outputs into `dir` (created if
/// absent). The report is written separately once scoring completes.
pub fn write_run(
    dir: &Path,
    manifest: &RunManifest,
    samples: &[Sample],
    raw_outputs: &[RawOutputRecord],
) -> Result<(), ManifestError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;

    let config_path = dir.join(CONFIG_FILE);
    let config_json =
        serde_json::to_string_pretty(manifest).expect("manifest serialization cannot fail");
    fs::write(&config_path, config_json).map_err(io_err(&config_path))?;

    jsonl::write_samples(&dir.join(SAMPLES_FILE), samples)?;

    let raw_path = dir.join(RAW_OUTPUTS_FILE);
    let mut lines = String::new();
    for record in raw_outputs {
        lines.push_str(&serde_json::to_string(record).expect("record serialization cannot fail"));
        lines.push('\n');
    }
    fs::write(&raw_path, lines).map_err(io_err(&raw_path))?;
    Ok(())
}

pub fn write_report(dir: &Path, report_json: &str) -> Result<(), ManifestError> {
    let path = dir.join(REPORT_FILE);
    fs::write(&path, report_json).map_err(io_err(&path))
}

pub fn load_manifest(dir: &Path) -> Result<RunManifest, ManifestError> {
    let path = dir.join(CONFIG_FILE);
    let text = fs::read_to_string(&path).map_err(io_err(&path))?;
    serde_json::from_str(&text).map_err(|e| ManifestError::BadJson {
        path,
        message: e.to_string(),
    })
}

pub fn load_samples(dir: &Path) -> Result<Vec<Sample>, ManifestError> {
    Ok(jsonl::read_samples(&dir.join(SAMPLES_FILE))?)
}

pub fn load_raw_outputs(dir: &Path) -> Result<Vec<RawOutputRecord>, ManifestError> {
    let path = dir.join(RAW_OUTPUTS_FILE);
    let text = fs::read_to_string(&path).map_err(io_err(&path))?;
    let mut records = Vec::new();
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        records.push(
            serde_json::from_str(line).map_err(|e| ManifestError::BadJson {
                path: path.clone(),
                message: e.to_string(),
            })?,
        );
    }
    Ok(records)
}

pub fn load_report(dir: &Path) -> Result<String, ManifestError> {
    let path = dir.join(REPORT_FILE);
    fs::read_to_string(&path).map_err(io_err(&path))
}
