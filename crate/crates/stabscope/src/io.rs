//! Atomic file output, full-precision CSV and content hashing.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// 17 significant digits, enough to round-trip every `f64`.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

pub fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

/// Writes through a temporary sibling and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = dir.join(format!(".{name}.tmp"));
    let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
    f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    drop(f);
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn to_json<T: Serialize>(value: &T) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(value).expect("in-memory JSON serialisation");
    out.push(b'\n');
    out
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = read(path)?;
    serde_json::from_slice(&bytes).map_err(|e| Error::json(path, e))
}

/// File-name-safe form of a feature or location name.
pub fn file_token(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.') { c } else { '_' })
        .collect()
}

/// A CSV document with a leading `#` provenance line.
pub struct Csv {
    buf: csv::Writer<Vec<u8>>,
}

impl Csv {
    pub fn new(provenance: &str, header: &[String]) -> Self {
        let mut head = Vec::new();
        writeln!(head, "# {provenance}").unwrap();
        let mut buf = csv::WriterBuilder::new().flexible(true).from_writer(head);
        buf.write_record(header).expect("in-memory CSV");
        Self { buf }
    }

    pub fn row<I, S>(&mut self, fields: I)
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        self.buf.write_record(fields).expect("in-memory CSV");
    }

    /// Appends `#`-prefixed lines after the data rows.
    pub fn finish_with_footer(self, footer: &[String]) -> Vec<u8> {
        let mut out = self.finish();
        for line in footer {
            writeln!(out, "# {line}").unwrap();
        }
        out
    }

    pub fn finish(self) -> Vec<u8> {
        self.buf.into_inner().expect("in-memory CSV")
    }
}

/// Parsed CSV: provenance line, header and records as strings.
pub struct CsvTable {
    pub path: PathBuf,
    pub provenance: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl CsvTable {
    pub fn read(path: &Path) -> Result<Self> {
        let bytes = read(path)?;
        let provenance = bytes
            .split(|&b| b == b'\n')
            .next()
            .and_then(|l| l.strip_prefix(b"# "))
            .map(|l| String::from_utf8_lossy(l).into_owned())
            .ok_or_else(|| Error::malformed(path, "missing provenance line"))?;
        let mut rd = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(bytes.as_slice());
        let header = rd
            .headers()
            .map_err(|e| Error::malformed(path, e.to_string()))?
            .iter()
            .map(String::from)
            .collect::<Vec<_>>();
        let mut rows = Vec::new();
        for rec in rd.records() {
            let rec = rec.map_err(|e| Error::malformed(path, e.to_string()))?;
            rows.push(rec.iter().map(String::from).collect());
        }
        Ok(Self { path: path.to_path_buf(), provenance, header, rows })
    }

    pub fn f64_at(&self, row: usize, col: usize) -> Result<f64> {
        let s = &self.rows[row][col];
        s.parse().map_err(|_| {
            Error::malformed(&self.path, format!("row {}, column '{}': '{s}' is not a number", row + 1, self.header[col]))
        })
    }

    pub fn usize_at(&self, row: usize, col: usize) -> Result<usize> {
        let s = &self.rows[row][col];
        s.parse().map_err(|_| {
            Error::malformed(&self.path, format!("row {}, column '{}': '{s}' is not an index", row + 1, self.header[col]))
        })
    }
}
