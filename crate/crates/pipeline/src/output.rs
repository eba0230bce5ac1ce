//! Output directory ownership and hash-stamped CSV artifacts.

use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::{format_err, io_err, PipelineError, Result};
use crate::formats::{read_text, write_bytes};

pub const LOCK_FILE: &str = ".vsn.lock";
const HASH_PREFIX: &str = "# config_hash: ";

/// Exclusive handle on an output directory, released on drop.
#[derive(Debug)]
pub struct OutDir {
    root: PathBuf,
    lock: PathBuf,
}

impl OutDir {
    pub fn acquire(root: &Path) -> Result<Self> {
        fs::create_dir_all(root).map_err(io_err(root))?;
        let lock = root.join(LOCK_FILE);
        let mut f = match OpenOptions::new().write(true).create_new(true).open(&lock) {
            Ok(f) => f,
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => return Err(PipelineError::Locked(lock)),
            Err(e) => return Err(io_err(&lock)(e)),
        };
        writeln!(f, "{}", std::process::id()).map_err(io_err(&lock))?;
        Ok(Self {
            root: root.to_path_buf(),
            lock,
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }
}

impl Drop for OutDir {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.lock);
    }
}

/// Shortest round-trip decimal; NaN and infinities as Rust spells them.
pub fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: AsRef<str>>(header: &[S]) -> Self {
        Self {
            header: header.iter().map(|s| s.as_ref().to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    pub fn to_csv(&self, hash: &str) -> Vec<u8> {
        let mut out = format!("{HASH_PREFIX}{hash}\n").into_bytes();
        {
            let mut w = csv::Writer::from_writer(&mut out);
            w.write_record(&self.header).expect("in-memory write");
            for r in &self.rows {
                w.write_record(r).expect("in-memory write");
            }
            w.flush().expect("in-memory write");
        }
        out
    }

    pub fn write(&self, path: &Path, hash: &str) -> Result<()> {
        write_bytes(path, &self.to_csv(hash))
    }

    /// Reads a stamped CSV, refusing files written under another config.
    pub fn read(path: &Path, expected_hash: &str, hint: &str) -> Result<Self> {
        if !path.is_file() {
            return Err(PipelineError::MissingArtifact {
                path: path.to_path_buf(),
                hint: hint.to_string(),
            });
        }
        let text = read_text(path)?;
        let (first, body) = text.split_once('\n').unwrap_or((&text, ""));
        let found = first
            .strip_prefix(HASH_PREFIX)
            .ok_or_else(|| format_err(path, "missing config_hash line"))?;
        check_hash(path, expected_hash, found)?;
        let mut r = csv::Reader::from_reader(body.as_bytes());
        let header = r
            .headers()
            .map_err(|e| format_err(path, e))?
            .iter()
            .map(str::to_string)
            .collect();
        let rows = r
            .records()
            .map(|rec| rec.map(|r| r.iter().map(str::to_string).collect()))
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| format_err(path, e))?;
        Ok(Self { header, rows })
    }
}

pub fn check_hash(path: &Path, expected: &str, found: &str) -> Result<()> {
    if found == expected {
        Ok(())
    } else {
        Err(PipelineError::HashMismatch {
            path: path.to_path_buf(),
            expected: expected.to_string(),
            found: found.to_string(),
        })
    }
}

pub fn parse_f64(path: &Path, s: &str) -> Result<f64> {
    s.parse().map_err(|_| format_err(path, format!("not a number: {s:?}")))
}

/// Writes a matrix as a stamped CSV with the given column labels.
pub fn write_matrix(path: &Path, hash: &str, header: &[String], m: &vsn_core::math::Matrix) -> Result<()> {
    let mut t = Table::new(header);
    for r in 0..m.rows() {
        t.push(m.row(r).iter().map(|v| fmt_f64(*v)).collect());
    }
    t.write(path, hash)
}
