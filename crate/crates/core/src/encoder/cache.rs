//! On-disk embedding cache.
//!
//! Format (CSV, UTF-8):
//!
//! ```text
//! # vlaudit embedding cache v1
//! backend,item,dim,values
//! mock-s0-d4-1a2b3c4d,text:An image of fraud,4,0.5 -0.5 0.5 0.5
//! ```
//!
//! `item` is `text:<prompt text>` or `image:<image id>`; `values` are
//! space-separated shortest round-trip decimals, so a reload is bit-exact.

use std::collections::BTreeMap;
use std::fs;
use std::io::ErrorKind;
use std::path::{Path, PathBuf};

use super::vector::EmbeddingVector;
use crate::error::{AuditError, Result};

pub const CACHE_HEADER: &str = "# vlaudit embedding cache v1";

#[derive(Debug, Clone, Default)]
pub struct EmbeddingCache {
    path: Option<PathBuf>,
    entries: BTreeMap<(String, String), EmbeddingVector>,
    dirty: bool,
}

impl EmbeddingCache {
    pub fn in_memory() -> Self {
        EmbeddingCache::default()
    }

    /// Opens the cache at `path`, starting empty if the file does not exist.
    pub fn open(path: impl Into<PathBuf>) -> Result<Self> {
        let path = path.into();
        let text = match fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == ErrorKind::NotFound => {
                return Ok(EmbeddingCache {
                    path: Some(path),
                    ..Default::default()
                })
            }
            Err(e) => return Err(AuditError::io(&path, e)),
        };
        let mut cache = Self::parse(&text, &path.display().to_string())?;
        cache.path = Some(path);
        Ok(cache)
    }

    pub fn parse(text: &str, source_name: &str) -> Result<Self> {
        let (first, body) = text.split_once('\n').unwrap_or((text, ""));
        if first.trim_end() != CACHE_HEADER {
            return Err(AuditError::load(source_name, 1, format!("not an embedding cache (expected `{CACHE_HEADER}`)")));
        }
        let mut reader = csv::Reader::from_reader(body.as_bytes());
        let mut entries = BTreeMap::new();
        for (i, row) in reader.records().enumerate() {
            let row_no = i + 3;
            let row = row.map_err(|e| AuditError::load(source_name, row_no, e.to_string()))?;
            if row.len() != 4 {
                return Err(AuditError::load(source_name, row_no, "expected 4 columns"));
            }
            let dim: usize = row[2]
                .parse()
                .map_err(|_| AuditError::load(source_name, row_no, format!("bad dim `{}`", &row[2])))?;
            let values = row[3]
                .split(' ')
                .map(str::parse::<f64>)
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| AuditError::load(source_name, row_no, e.to_string()))?;
            if values.len() != dim {
                return Err(AuditError::load(source_name, row_no, format!("{} values for dim {dim}", values.len())));
            }
            let v = EmbeddingVector::new(values).map_err(|e| AuditError::load(source_name, row_no, e.to_string()))?;
            entries.insert((row[0].to_string(), row[1].to_string()), v);
        }
        Ok(EmbeddingCache {
            path: None,
            entries,
            dirty: false,
        })
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, backend: &str, item: &str) -> Option<&EmbeddingVector> {
        self.entries.get(&(backend.to_string(), item.to_string()))
    }

    pub fn insert(&mut self, backend: &str, item: &str, vector: EmbeddingVector) {
        self.entries.insert((backend.to_string(), item.to_string()), vector);
        self.dirty = true;
    }

    pub fn to_csv(&self) -> String {
        let mut writer = csv::Writer::from_writer(Vec::new());
        writer.write_record(["backend", "item", "dim", "values"]).expect("in-memory write");
        for ((backend, item), v) in &self.entries {
            let values: Vec<String> = v.values().iter().map(|x| x.to_string()).collect();
            writer
                .write_record([backend.as_str(), item.as_str(), &v.dim().to_string(), &values.join(" ")])
                .expect("in-memory write");
        }
        let body = String::from_utf8(writer.into_inner().expect("in-memory flush")).expect("utf-8 csv");
        format!("{CACHE_HEADER}\n{body}")
    }

    /// Writes the cache back to its file if anything changed.
    pub fn save(&mut self) -> Result<()> {
        let Some(path) = &self.path else { return Ok(()) };
        if !self.dirty {
            return Ok(());
        }
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent).map_err(|e| AuditError::io(parent, e))?;
        }
        fs::write(path, self.to_csv()).map_err(|e| AuditError::io(path, e))?;
        self.dirty = false;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cache.csv");
        let mut cache = EmbeddingCache::open(&path).unwrap();
        assert!(cache.is_empty());
        let v = EmbeddingVector::normalized(vec![0.1, 1.0 / 3.0, -2.0]).unwrap();
        cache.insert("b", "text:An image of \"quoted\", text", v.clone());
        cache.save().unwrap();
        let reloaded = EmbeddingCache::open(&path).unwrap();
        assert_eq!(reloaded.get("b", "text:An image of \"quoted\", text"), Some(&v));
        assert!(reloaded.get("other", "text:An image of \"quoted\", text").is_none());
    }

    #[test]
    fn rejects_foreign_files() {
        assert!(EmbeddingCache::parse("backend,item\n", "x").is_err());
        let bad = format!("{CACHE_HEADER}\nbackend,item,dim,values\nb,i,3,0.1 0.2\n");
        assert!(EmbeddingCache::parse(&bad, "x").is_err());
    }
}
