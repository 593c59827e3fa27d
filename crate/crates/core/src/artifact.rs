//! Small helpers shared by everything that writes files: number formatting,
//! CSV writing, content hashes and the per-directory manifest.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Shortest decimal that parses back to the same `f64`.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:e}")
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn write_csv<I>(path: &Path, header: &[String], rows: I) -> Result<()>
where
    I: IntoIterator<Item = Vec<String>>,
{
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    w.write_record(header).map_err(|e| csv_error(path, e))?;
    for row in rows {
        w.write_record(&row).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Header and rows of a CSV file as strings.
pub fn read_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let header = r
        .headers()
        .map_err(|e| csv_error(path, e))?
        .iter()
        .map(str::to_owned)
        .collect();
    let mut rows = vec![];
    for rec in r.records() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        rows.push(rec.iter().map(str::to_owned).collect());
    }
    Ok((header, rows))
}

pub fn parse_f64(s: &str, path: &Path) -> Result<f64> {
    s.trim()
        .parse()
        .map_err(|_| Error::Format(format!("{}: '{s}' is not a number", path.display())))
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    Error::Format(format!("{}: {e}", path.display()))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Format(e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

/// One recorded artifact: its digest, the hash of the config that wrote it
/// and the key of the config sections it depends on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub sha256: String,
    pub config_hash: String,
    pub key: String,
}

/// `manifest.json`: every artifact in a directory with its provenance.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Manifest {
    /// Config of the most recent stage run in the directory.
    pub config_hash: String,
    pub files: BTreeMap<String, ManifestEntry>,
}

impl Manifest {
    pub const FILE: &'static str = "manifest.json";

    /// Loads the directory's manifest; a missing or unreadable one starts
    /// empty, which only forfeits reuse.
    pub fn open(dir: &Path) -> Result<Self> {
        let path = dir.join(Self::FILE);
        Ok(if path.exists() { read_json(&path).unwrap_or_default() } else { Self::default() })
    }

    /// Hashes the named files (relative to `dir`) and writes the manifest.
    pub fn record(&mut self, dir: &Path, config_hash: &str, key: &str, names: &[&str]) -> Result<()> {
        self.config_hash = config_hash.to_owned();
        for name in names {
            let path = dir.join(name);
            let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
            let entry = ManifestEntry {
                sha256: sha256_hex(&bytes),
                config_hash: config_hash.to_owned(),
                key: key.to_owned(),
            };
            self.files.insert((*name).to_owned(), entry);
        }
        write_json(&dir.join(Self::FILE), self)
    }

    /// True when `name` was recorded under `key` and is unchanged on disk.
    pub fn is_current(&self, dir: &Path, name: &str, key: &str) -> bool {
        match (self.files.get(name), fs::read(dir.join(name))) {
            (Some(e), Ok(bytes)) => e.key == key && e.sha256 == sha256_hex(&bytes),
            _ => false,
        }
    }
}
