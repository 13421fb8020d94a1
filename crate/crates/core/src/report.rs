//! Structured check results and the shared CSV/JSON output helpers.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;

pub const SCHEMA_VERSION: u32 = 1;

/// Result of one numerical check. `pass ⇔ margin ≥ −tolerance`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub check: String,
    pub pass: bool,
    pub margin: f64,
    pub tolerance: f64,
    pub samples: usize,
    pub seed: Option<u64>,
    #[serde(default)]
    pub diagnostics: BTreeMap<String, serde_json::Value>,
}

impl CheckReport {
    pub fn new(check: impl Into<String>, margin: f64, tolerance: f64, samples: usize, seed: Option<u64>) -> Self {
        CheckReport {
            check: check.into(),
            pass: margin >= -tolerance,
            margin,
            tolerance,
            samples,
            seed,
            diagnostics: BTreeMap::new(),
        }
    }

    pub fn with(mut self, key: &str, value: impl Serialize) -> Self {
        self.diagnostics
            .insert(key.to_string(), serde_json::to_value(value).unwrap_or(serde_json::Value::Null));
        self
    }

    pub fn diagnostic_f64(&self, key: &str) -> Option<f64> {
        self.diagnostics.get(key).and_then(|v| v.as_f64())
    }
}

/// A CSV table; every rendered file starts with a `schema` column.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CsvTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl CsvTable {
    pub fn new<S: AsRef<str>>(header: &[S]) -> Self {
        CsvTable { header: header.iter().map(|s| s.as_ref().to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn render(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut head = vec!["schema".to_string()];
        head.extend(self.header.iter().cloned());
        w.write_record(&head).expect("in-memory write");
        for row in &self.rows {
            let mut r = vec![SCHEMA_VERSION.to_string()];
            r.extend(row.iter().cloned());
            w.write_record(&r).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv is utf-8")
    }
}

/// Formats a float with round-trip precision.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:?}")
}

/// Writes `contents` to `path` atomically (temporary file in the same
/// directory, then rename).
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    use std::io::Write;
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(contents)?;
    tmp.flush()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}
