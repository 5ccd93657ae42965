//! Line-delimited JSON persistence for datasets and models, run configs and
//! reports.
//!
//! A dataset file starts with a header object and then holds one episode
//! per line. Field order follows the type declarations and floats use the
//! shortest round-trip form, so equal datasets always produce equal bytes.

mod config;
mod validate;

pub use config::{ConfigError, EvalSettings, GenerationSettings, RunConfig};
pub use validate::{validate, validate_dataset, ValidationReport, Violation};

use std::fs;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use ivgen_core::datagen::{Dataset, Episode};
use ivgen_core::policy::{FitError, ModelData, PolicyModel};
use ivgen_core::world::TaskSpec;
use serde::{Deserialize, Serialize};

/// Version written into every file header.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FileKind {
    Dataset,
    Model,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetHeader {
    pub schema_version: u32,
    pub kind: FileKind,
    pub task: TaskSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelHeader {
    schema_version: u32,
    kind: FileKind,
}

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("line {line}: schema version {found} is newer than supported version {SCHEMA_VERSION}")]
    FutureVersion { line: usize, found: u32 },
    #[error("line {line}: expected a {expected:?} file")]
    WrongKind { line: usize, expected: FileKind },
    #[error("line {line}: malformed record: {message}")]
    Malformed { line: usize, message: String },
    #[error("line {line}: missing header")]
    MissingHeader { line: usize },
    #[error("model: {0}")]
    Model(FitError),
    #[error("{0}")]
    Encode(#[from] serde_json::Error),
}

impl StoreError {
    /// 1-based line the error refers to, if any.
    pub fn line(&self) -> Option<usize> {
        match self {
            StoreError::FutureVersion { line, .. }
            | StoreError::WrongKind { line, .. }
            | StoreError::Malformed { line, .. }
            | StoreError::MissingHeader { line } => Some(*line),
            _ => None,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> StoreError + '_ {
    move |source| StoreError::Io { path: path.to_path_buf(), source }
}

/// Canonical dataset bytes.
pub fn encode_dataset(ds: &Dataset) -> Result<Vec<u8>, StoreError> {
    let mut out = Vec::new();
    write_dataset_to(ds, &mut out)?;
    Ok(out)
}

pub fn write_dataset_to<W: Write>(ds: &Dataset, mut w: W) -> Result<(), StoreError> {
    let header = DatasetHeader { schema_version: SCHEMA_VERSION, kind: FileKind::Dataset, task: ds.task.clone() };
    serde_json::to_writer(&mut w, &header)?;
    w.write_all(b"\n").map_err(serde_json::Error::io)?;
    for e in &ds.episodes {
        serde_json::to_writer(&mut w, e)?;
        w.write_all(b"\n").map_err(serde_json::Error::io)?;
    }
    Ok(())
}

pub fn write_dataset(ds: &Dataset, path: &Path) -> Result<(), StoreError> {
    let f = fs::File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(f);
    write_dataset_to(ds, &mut w)?;
    w.flush().map_err(io_err(path))
}

fn check_version(line: usize, found: u32) -> Result<(), StoreError> {
    if found > SCHEMA_VERSION {
        Err(StoreError::FutureVersion { line, found })
    } else {
        Ok(())
    }
}

/// Reads the header, refusing future schema versions before anything else
/// is interpreted.
fn parse_header(text: &str) -> Result<DatasetHeader, StoreError> {
    let value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| StoreError::Malformed { line: 1, message: e.to_string() })?;
    let version = value.get("schema_version").and_then(|v| v.as_u64()).ok_or(StoreError::MissingHeader { line: 1 })?;
    check_version(1, u32::try_from(version).unwrap_or(u32::MAX))?;
    let header: DatasetHeader =
        serde_json::from_value(value).map_err(|e| StoreError::Malformed { line: 1, message: e.to_string() })?;
    if header.kind != FileKind::Dataset {
        return Err(StoreError::WrongKind { line: 1, expected: FileKind::Dataset });
    }
    Ok(header)
}

pub fn read_dataset_from<R: BufRead>(r: R) -> Result<Dataset, StoreError> {
    let mut lines = r.lines().enumerate();
    let (_, first) = lines.next().ok_or(StoreError::MissingHeader { line: 1 })?;
    let first = first.map_err(|e| StoreError::Malformed { line: 1, message: e.to_string() })?;
    let header = parse_header(&first)?;
    let mut ds = Dataset::new(header.task);
    for (i, line) in lines {
        let n = i + 1;
        let line = line.map_err(|e| StoreError::Malformed { line: n, message: e.to_string() })?;
        if line.is_empty() {
            continue;
        }
        let e: Episode = serde_json::from_str(&line).map_err(|e| StoreError::Malformed { line: n, message: e.to_string() })?;
        ds.episodes.push(e);
    }
    Ok(ds)
}

pub fn read_dataset(path: &Path) -> Result<Dataset, StoreError> {
    let f = fs::File::open(path).map_err(io_err(path))?;
    read_dataset_from(BufReader::new(f))
}

pub fn decode_dataset(bytes: &[u8]) -> Result<Dataset, StoreError> {
    read_dataset_from(bytes)
}

/// Model file: a header line followed by the model data on one line.
pub fn write_model(model: &PolicyModel, path: &Path) -> Result<(), StoreError> {
    let f = fs::File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(f);
    serde_json::to_writer(&mut w, &ModelHeader { schema_version: SCHEMA_VERSION, kind: FileKind::Model })?;
    w.write_all(b"\n").map_err(io_err(path))?;
    serde_json::to_writer(&mut w, model.data())?;
    w.write_all(b"\n").map_err(io_err(path))?;
    w.flush().map_err(io_err(path))
}

pub fn read_model(path: &Path) -> Result<PolicyModel, StoreError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let mut lines = text.lines();
    let head = lines.next().ok_or(StoreError::MissingHeader { line: 1 })?;
    let header: ModelHeader =
        serde_json::from_str(head).map_err(|e| StoreError::Malformed { line: 1, message: e.to_string() })?;
    check_version(1, header.schema_version)?;
    if header.kind != FileKind::Model {
        return Err(StoreError::WrongKind { line: 1, expected: FileKind::Model });
    }
    let body = lines.next().ok_or(StoreError::Malformed { line: 2, message: "missing model data".into() })?;
    let data: ModelData =
        serde_json::from_str(body).map_err(|e| StoreError::Malformed { line: 2, message: e.to_string() })?;
    PolicyModel::from_data(data).map_err(StoreError::Model)
}

/// Pretty JSON with a trailing newline, for reports.
pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<(), StoreError> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(io_err(path))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, StoreError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|e| StoreError::Malformed { line: e.line(), message: e.to_string() })
}
