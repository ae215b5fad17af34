use std::path::Path;

use nalgebra::DMatrix;

use super::dictionary::Dictionary;
use crate::error::{Error, Result};
use crate::matrix_io;

const RESERVED: [&str; 6] = ["rows", "columns", "dtype", "order", "atoms", "label"];

/// Writes the atom matrix (rows × atoms, row-major) and a sidecar with the
/// label and metadata.
pub fn write_dictionary(d: &Dictionary, path: impl AsRef<Path>) -> Result<()> {
    let m = d.matrix();
    let data: Vec<f64> = (0..m.nrows()).flat_map(|r| m.row(r).iter().copied().collect::<Vec<_>>()).collect();
    let mut meta = vec![
        ("atoms".to_string(), d.atoms().to_string()),
        ("label".to_string(), d.label.clone()),
    ];
    for (k, v) in &d.meta {
        if k.contains(char::is_whitespace) || RESERVED.contains(&k.as_str()) {
            return Err(Error::Format(format!("unusable metadata key {k:?}")));
        }
        meta.push((k.clone(), v.clone()));
    }
    matrix_io::write_matrix(path.as_ref(), m.nrows(), m.ncols(), &data, &meta)
}

pub fn read_dictionary(path: impl AsRef<Path>) -> Result<Dictionary> {
    let s = matrix_io::read_matrix(path.as_ref())?;
    let values = DMatrix::from_row_slice(s.rows, s.cols, &s.data);
    let mut d = Dictionary::new(values)?;
    d.label = s.get("label").unwrap_or("").to_string();
    d.meta = s
        .meta
        .iter()
        .filter(|(k, _)| !RESERVED.contains(&k.as_str()))
        .cloned()
        .collect();
    Ok(d)
}
