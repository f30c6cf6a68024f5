//! Artifact writers. JSON objects are emitted with sorted keys and every
//! file carries the configuration hash, master seed and artifact version.

use crate::error::{Error, Result};
use crate::ARTIFACT_VERSION;
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};

/// Bumped whenever the layout of a JSON artifact changes.
pub const JSON_SCHEMA_VERSION: u32 = 1;

pub const META_COLUMNS: [&str; 3] = ["config_hash", "seed", "version"];

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Meta {
    pub command: String,
    pub config_hash: String,
    pub seed: u64,
}

impl Meta {
    fn json(&self) -> Value {
        json!({
            "command": self.command,
            "config_hash": self.config_hash,
            "seed": self.seed,
            "version": ARTIFACT_VERSION,
            "schema_version": JSON_SCHEMA_VERSION,
        })
    }

    fn csv_cells(&self) -> [String; 3] {
        [self.config_hash.clone(), self.seed.to_string(), ARTIFACT_VERSION.to_string()]
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Rebuilds a JSON value so every object's keys are in sorted order
/// (independently of how the map type orders them).
fn sorted(v: Value) -> Value {
    match v {
        Value::Object(map) => {
            let mut entries: Vec<(String, Value)> = map.into_iter().collect();
            entries.sort_by(|a, b| a.0.cmp(&b.0));
            Value::Object(entries.into_iter().map(|(k, v)| (k, sorted(v))).collect())
        }
        Value::Array(xs) => Value::Array(xs.into_iter().map(sorted).collect()),
        other => other,
    }
}

/// `{"meta": …, "status": …, "result": …, "error": …}` as pretty JSON.
pub fn json_document<T: Serialize>(meta: &Meta, status: &str, result: &T, error: Option<&Error>) -> Result<String> {
    let mut doc = json!({
        "meta": meta.json(),
        "status": status,
        "result": serde_json::to_value(result)?,
    });
    if let Some(e) = error {
        doc["error"] = json!(e.to_string());
    }
    let mut text = serde_json::to_string_pretty(&sorted(doc))?;
    text.push('\n');
    Ok(text)
}

pub fn write_json<T: Serialize>(
    dir: &Path,
    name: &str,
    meta: &Meta,
    status: &str,
    result: &T,
    error: Option<&Error>,
) -> Result<PathBuf> {
    let path = dir.join(name);
    std::fs::write(&path, json_document(meta, status, result, error)?)?;
    Ok(path)
}

/// Shortest round-trip decimal for finite values, empty cells otherwise.
pub fn cell(x: Option<f64>) -> String {
    match x {
        Some(v) if v.is_finite() => format!("{v}"),
        Some(v) => format!("{v}").to_lowercase(),
        None => String::new(),
    }
}

/// RFC-4180 CSV with the metadata columns appended to every row.
pub fn csv_document(meta: &Meta, header: &[&str], rows: &[Vec<String>]) -> Result<Vec<u8>> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::CRLF)
        .from_writer(Vec::new());
    let to_err = |e: csv::Error| Error::Io(std::io::Error::other(e));
    let head: Vec<&str> = header.iter().copied().chain(META_COLUMNS).collect();
    w.write_record(&head).map_err(to_err)?;
    let extra = meta.csv_cells();
    for row in rows {
        w.write_record(row.iter().map(String::as_str).chain(extra.iter().map(String::as_str)))
            .map_err(to_err)?;
    }
    w.into_inner().map_err(|e| Error::Io(std::io::Error::other(e.to_string())))
}

pub fn write_csv(dir: &Path, name: &str, meta: &Meta, header: &[&str], rows: &[Vec<String>]) -> Result<PathBuf> {
    let path = dir.join(name);
    std::fs::write(&path, csv_document(meta, header, rows)?)?;
    Ok(path)
}
