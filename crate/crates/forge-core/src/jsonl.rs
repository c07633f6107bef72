//! Canonical sample JSONL: one record per line, all nine fields always
//! present (absent optionals serialize as null).

use crate::model::{Sample, SchemaViolation};
use std::fs;
use std::io::{self, Write};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum JsonlError {
    #[error("{path}:{line}: {violation}")]
    Schema {
        path: String,
        line: usize,
        violation: SchemaViolation,
    },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
}

/// Serialize one sample to its canonical single-line record.
pub fn serialize_sample(sample: &Sample) -> String {
    serde_json::to_string(sample).expect("sample serialization cannot fail")
}

/// Decode and validate one JSONL record.
pub fn deserialize_sample(line: &str) -> Result<Sample, SchemaViolation> {
    let sample: Sample = serde_json::from_str(line)
        .map_err(|e| SchemaViolation::new("record", e.to_string()))?;
    sample.validate()?;
    Ok(sample)
}

pub fn read_samples(path: &Path) -> Result<Vec<Sample>, JsonlError> {
    let text = fs::read_to_string(path).map_err(|source| JsonlError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut samples = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let sample = deserialize_sample(line).map_err(|violation| JsonlError::Schema {
            path: path.display().to_string(),
            line: i + 1,
            violation,
        })?;
        samples.push(sample);
    }
    Ok(samples)
}

pub fn write_samples(path: &Path, samples: &[Sample]) -> Result<(), JsonlError> {
    let io_err = |source| JsonlError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut file = fs::File::create(path).map_err(io_err)?;
    for sample in samples {
        writeln!(file, "{}", serialize_sample(sample)).map_err(io_err)?;
    }
    Ok(())
}
