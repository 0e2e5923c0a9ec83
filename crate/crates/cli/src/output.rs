//! Run artifacts: the manifest, CSV tables and JSON reports.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use sha2::{Digest, Sha256};

/// Formats a float with 17 significant digits; non-finite values spell out.
pub fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        "NaN".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{v:.16e}")
    }
}

/// Column-oriented CSV writer with a mandatory header row.
pub struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        Table {
            header: header.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn push_numbers(&mut self, row: &[f64]) {
        self.push(row.iter().map(|&v| fmt_f64(v)).collect());
    }

    pub fn write(&self, path: &Path) -> io::Result<()> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::CRLF).from_path(path)?;
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        w.flush()
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> io::Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(io::Error::other)?;
    text.push('\n');
    fs::write(path, text)
}

/// SHA-256 of `blob <len>\0<bytes>`, the git object-hash layout.
pub fn blob_hash(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(bytes);
    hex(&h.finalize())
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct InputRecord {
    pub path: String,
    pub hash: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub subcommand: String,
    pub seed: u64,
    pub config: serde_json::Value,
    pub inputs: Vec<InputRecord>,
    /// Hash over the canonical config and every input blob.
    pub content_hash: String,
    /// The only field that changes between identical reruns.
    pub started_unix: u64,
}

impl Manifest {
    pub fn new(subcommand: &str, seed: u64, config: serde_json::Value, inputs: &[PathBuf]) -> io::Result<Self> {
        let canonical = serde_json::to_vec(&config).map_err(io::Error::other)?;
        let mut h = Sha256::new();
        h.update(blob_hash(&canonical).as_bytes());
        let mut records = Vec::new();
        for p in inputs {
            for file in input_files(p)? {
                let hash = blob_hash(&fs::read(&file)?);
                h.update(hash.as_bytes());
                records.push(InputRecord {
                    path: file.display().to_string(),
                    hash,
                });
            }
        }
        Ok(Manifest {
            tool: "nsk",
            version: env!("CARGO_PKG_VERSION"),
            subcommand: subcommand.to_string(),
            seed,
            config,
            inputs: records,
            content_hash: hex(&h.finalize()),
            started_unix: SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
        })
    }

    pub fn write(&self, path: &Path) -> io::Result<()> {
        write_json(path, self)
    }
}

/// A file, or the sorted regular files directly inside a directory.
fn input_files(p: &Path) -> io::Result<Vec<PathBuf>> {
    if p.is_dir() {
        let mut out: Vec<PathBuf> = fs::read_dir(p)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|q| q.is_file())
            .collect();
        out.sort();
        Ok(out)
    } else {
        Ok(vec![p.to_path_buf()])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_keep_full_precision() {
        let v = 0.1 + 0.2;
        let s = fmt_f64(v);
        assert_eq!(s.parse::<f64>().unwrap(), v);
        assert_eq!(s, "3.0000000000000004e-1");
        assert_eq!(fmt_f64(0.0), "0.0000000000000000e0");
        assert_eq!(fmt_f64(f64::NAN), "NaN");
    }

    #[test]
    fn blob_hash_matches_git_layout() {
        // sha256 of "blob 0\0"
        assert_eq!(blob_hash(b""), "473a0f4c3be8a93681a267e3b1e9a7dcda1185436fe141f7749120a303721813");
    }

    #[test]
    fn table_quotes_per_rfc4180() {
        let dir = tempfile::tempdir().unwrap();
        let mut t = Table::new(["name", "value"]);
        t.push(vec!["a,b".into(), fmt_f64(1.5)]);
        let p = dir.path().join("x.csv");
        t.write(&p).unwrap();
        let text = fs::read_to_string(&p).unwrap();
        assert_eq!(text, "name,value\r\n\"a,b\",1.5000000000000000e0\r\n");
    }
}
