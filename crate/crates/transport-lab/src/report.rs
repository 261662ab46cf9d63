//! CSV and JSON report plumbing. Numeric CSV bodies are built as strings
//! with Rust's shortest round-trip float formatting, written verbatim, and
//! hashed (sorted by file name) into the run manifest checksum, so identical
//! configurations produce byte-identical outputs whatever the worker count.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::Result;

/// Quote a CSV cell if it contains separators or quotes.
pub fn csv_cell(s: &str) -> String {
    if s.contains(',') || s.contains('"') || s.contains('\n') {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Accumulates report files; bodies are retained for the manifest checksum.
pub struct ReportSink {
    dir: PathBuf,
    bodies: BTreeMap<String, Vec<u8>>,
}

impl ReportSink {
    pub fn new(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Self { dir: dir.to_path_buf(), bodies: BTreeMap::new() })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Write a CSV file with the given header and rows.
    pub fn write_csv(&mut self, name: &str, header: &str, rows: &[String]) -> Result<()> {
        let mut body = String::with_capacity(rows.len() * 32 + header.len() + 1);
        body.push_str(header);
        body.push('\n');
        for r in rows {
            body.push_str(r);
            body.push('\n');
        }
        fs::write(self.dir.join(name), &body)?;
        self.bodies.insert(name.to_string(), body.into_bytes());
        Ok(())
    }

    /// Write a JSON report (checksummed like the CSVs).
    pub fn write_json<T: serde::Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let body = serde_json::to_vec_pretty(value)
            .map_err(|e| crate::LabError::Config(e.to_string()))?;
        fs::write(self.dir.join(name), &body)?;
        self.bodies.insert(name.to_string(), body);
        Ok(())
    }

    pub fn file_names(&self) -> Vec<String> {
        self.bodies.keys().cloned().collect()
    }

    /// SHA-256 over (name, body) pairs in name order.
    pub fn checksum(&self) -> String {
        let mut hasher = Sha256::new();
        for (name, body) in &self.bodies {
            hasher.update(name.as_bytes());
            hasher.update([0u8]);
            hasher.update(body);
        }
        let digest = hasher.finalize();
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}
