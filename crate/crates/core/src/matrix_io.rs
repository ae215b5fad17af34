//! Flat binary matrices (row-major little-endian f64) with a plain-text sidecar.
//!
//! The sidecar holds one `key value` pair per line. `rows`, `columns`,
//! `dtype` and `order` are always present; callers append their own keys.

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("txt")
}

pub fn write_matrix(path: &Path, rows: usize, cols: usize, data: &[f64], extra: &[(String, String)]) -> Result<()> {
    if data.len() != rows * cols {
        return Err(Error::Shape(format!("{rows}x{cols} matrix with {} values", data.len())));
    }
    if path.as_os_str().is_empty() {
        return Err(Error::io(
            path,
            std::io::Error::new(std::io::ErrorKind::InvalidInput, "empty output path"),
        ));
    }
    let mut bytes = Vec::with_capacity(data.len() * 8);
    for v in data {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))?;

    let mut text = format!("rows {rows}\ncolumns {cols}\ndtype f64-le\norder row-major\n");
    for (k, v) in extra {
        text.push_str(k);
        text.push(' ');
        text.push_str(v);
        text.push('\n');
    }
    let side = sidecar_path(path);
    fs::write(&side, text).map_err(|e| Error::io(&side, e))
}

/// Matrix read back from disk along with every sidecar entry, in file order.
#[derive(Debug, Clone)]
pub struct StoredMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
    pub meta: Vec<(String, String)>,
}

impl StoredMatrix {
    pub fn get(&self, key: &str) -> Option<&str> {
        self.meta.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }
}

pub fn read_matrix(path: &Path) -> Result<StoredMatrix> {
    let side = sidecar_path(path);
    let text = fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
    let meta: Vec<(String, String)> = text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| match l.split_once(' ') {
            Some((k, v)) => (k.to_string(), v.to_string()),
            None => (l.to_string(), String::new()),
        })
        .collect();
    let num = |key: &str| -> Result<usize> {
        meta.iter()
            .find(|(k, _)| k == key)
            .ok_or_else(|| Error::Format(format!("sidecar {} lacks `{key}`", side.display())))?
            .1
            .trim()
            .parse()
            .map_err(|_| Error::Format(format!("bad `{key}` in {}", side.display())))
    };
    let rows = num("rows")?;
    let cols = num("columns")?;
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() != rows * cols * 8 {
        return Err(Error::Format(format!(
            "{} holds {} bytes, sidecar implies {}",
            path.display(),
            bytes.len(),
            rows * cols * 8
        )));
    }
    let data = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(StoredMatrix { rows, cols, data, meta })
}

/// Space-separated shortest round-trip representation of `values`.
pub fn format_floats(values: &[f64]) -> String {
    values.iter().map(|v| format!("{v:?}")).collect::<Vec<_>>().join(" ")
}

pub fn parse_floats(s: &str) -> Result<Vec<f64>> {
    s.split_whitespace()
        .map(|t| t.parse().map_err(|_| Error::Format(format!("bad number {t:?}"))))
        .collect()
}
