use std::ops::Range;

use nalgebra::{DMatrix, DVector, DVectorView};

use crate::error::{Error, Result};

/// Column-normalized atom matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Dictionary {
    values: DMatrix<f64>,
    pub label: String,
    /// Free-form `key value` metadata carried into the sidecar file.
    pub meta: Vec<(String, String)>,
}

const UNIT_TOL: f64 = 1e-9;

impl Dictionary {
    /// Wraps `values` after checking that every column has unit norm.
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        if values.nrows() == 0 || values.ncols() == 0 {
            return Err(Error::Shape("dictionary needs at least one row and one atom".into()));
        }
        for (j, c) in values.column_iter().enumerate() {
            let n = c.norm();
            if !n.is_finite() || (n - 1.0).abs() > UNIT_TOL {
                return Err(Error::Numeric(format!("atom {j} has norm {n}")));
            }
        }
        Ok(Dictionary {
            values,
            label: String::new(),
            meta: Vec::new(),
        })
    }

    /// Normalizes every column; zero columns are an error.
    pub fn from_columns(mut values: DMatrix<f64>) -> Result<Self> {
        for (j, mut c) in values.column_iter_mut().enumerate() {
            let n = c.norm();
            if !(n > 0.0) || !n.is_finite() {
                return Err(Error::Degenerate(format!("atom {j} has norm {n}")));
            }
            c /= n;
        }
        Dictionary::new(values)
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn rows(&self) -> usize {
        self.values.nrows()
    }

    pub fn atoms(&self) -> usize {
        self.values.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn atom(&self, j: usize) -> DVectorView<'_, f64> {
        self.values.column(j)
    }

    pub fn meta_value(&self, key: &str) -> Option<&str> {
        self.meta.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    /// Dictionary over the sub-signal `rows`, with atoms renormalized. Atoms
    /// vanishing on those rows are dropped.
    pub fn restrict_rows(&self, rows: Range<usize>) -> Result<Dictionary> {
        if rows.is_empty() || rows.end > self.rows() {
            return Err(Error::Shape(format!("row range {rows:?} of {} rows", self.rows())));
        }
        let sub = self.values.rows(rows.start, rows.len());
        let kept: Vec<DVector<f64>> = sub
            .column_iter()
            .filter(|c| c.norm() > 1e-12)
            .map(|c| c / c.norm())
            .collect();
        if kept.is_empty() {
            return Err(Error::Degenerate("no atom survives the row restriction".into()));
        }
        let mut d = Dictionary::new(DMatrix::from_columns(&kept))?;
        d.label = self.label.clone();
        d.meta = self.meta.clone();
        Ok(d)
    }

    pub(crate) fn check_signal(&self, len: usize) -> Result<()> {
        if len != self.rows() {
            return Err(Error::Shape(format!("signal of length {len} for {}-row dictionary", self.rows())));
        }
        Ok(())
    }
}

/// Coefficients over a dictionary, stored by support.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseCode {
    pub length: usize,
    /// Strictly increasing atom indices.
    pub support: Vec<usize>,
    pub coefficients: Vec<f64>,
}

impl SparseCode {
    pub fn zero(length: usize) -> Self {
        SparseCode {
            length,
            support: Vec::new(),
            coefficients: Vec::new(),
        }
    }

    /// Sorts `(index, value)` pairs into a code, dropping exact zeros.
    pub fn from_pairs(length: usize, mut pairs: Vec<(usize, f64)>) -> Self {
        pairs.retain(|p| p.1 != 0.0);
        pairs.sort_by_key(|p| p.0);
        SparseCode {
            length,
            support: pairs.iter().map(|p| p.0).collect(),
            coefficients: pairs.iter().map(|p| p.1).collect(),
        }
    }

    pub fn from_dense(v: &[f64]) -> Self {
        SparseCode::from_pairs(v.len(), v.iter().copied().enumerate().collect())
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut v = vec![0.0; self.length];
        for (&j, &c) in self.support.iter().zip(&self.coefficients) {
            v[j] = c;
        }
        v
    }

    pub fn nnz(&self) -> usize {
        self.support.len()
    }

    pub fn l1_norm(&self) -> f64 {
        self.coefficients.iter().map(|c| c.abs()).sum()
    }

    pub fn get(&self, j: usize) -> f64 {
        match self.support.binary_search(&j) {
            Ok(k) => self.coefficients[k],
            Err(_) => 0.0,
        }
    }
}

pub fn reconstruct(d: &Dictionary, a: &SparseCode) -> Result<DVector<f64>> {
    if a.length != d.atoms() {
        return Err(Error::Shape(format!("code of length {} for {} atoms", a.length, d.atoms())));
    }
    let mut y = DVector::zeros(d.rows());
    for (&j, &c) in a.support.iter().zip(&a.coefficients) {
        y.axpy(c, &d.atom(j), 1.0);
    }
    Ok(y)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_non_unit_columns() {
        assert!(Dictionary::new(DMatrix::from_element(3, 2, 1.0)).is_err());
        let d = Dictionary::from_columns(DMatrix::from_element(4, 2, 3.0)).unwrap();
        assert!((d.atom(1).norm() - 1.0).abs() < 1e-15);
        assert!(Dictionary::from_columns(DMatrix::zeros(3, 1)).is_err());
    }

    #[test]
    fn reconstruct_cases() {
        let d = Dictionary::new(DMatrix::identity(3, 3)).unwrap();
        assert_eq!(reconstruct(&d, &SparseCode::zero(3)).unwrap(), DVector::zeros(3));
        let a = SparseCode::from_pairs(3, vec![(2, 1.5)]);
        assert_eq!(reconstruct(&d, &a).unwrap(), DVector::from_vec(vec![0.0, 0.0, 1.5]));
        assert!(reconstruct(&d, &SparseCode::zero(4)).is_err());
    }

    #[test]
    fn restrict_rows_renormalizes_and_drops() {
        let m = DMatrix::from_column_slice(3, 2, &[0.6, 0.8, 0.0, 0.0, 0.0, 1.0]);
        let d = Dictionary::new(m).unwrap();
        let r = d.restrict_rows(0..2).unwrap();
        assert_eq!(r.atoms(), 1);
        assert!((r.atom(0)[0] - 0.6).abs() < 1e-15);
    }

    #[test]
    fn code_dense_round_trip() {
        let c = SparseCode::from_dense(&[0.0, 2.0, 0.0, -1.0]);
        assert_eq!(c.support, vec![1, 3]);
        assert_eq!(c.to_dense(), vec![0.0, 2.0, 0.0, -1.0]);
        assert_eq!(c.l1_norm(), 3.0);
        assert_eq!(c.get(3), -1.0);
        assert_eq!(c.get(0), 0.0);
    }
}
