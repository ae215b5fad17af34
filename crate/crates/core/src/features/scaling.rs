use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::matrix_io::{format_floats, parse_floats};

/// Per-row affine map `(x − offset) / scale` taking training features onto
/// `[0, 1]`. Keeping every coordinate non-negative matters for sparse coding:
/// after centering, two classes on opposite sides of the mean would be
/// spanned by the same atoms.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureScaling {
    pub offset: Vec<f64>,
    pub scale: Vec<f64>,
}

impl FeatureScaling {
    pub fn identity(rows: usize) -> Self {
        FeatureScaling {
            offset: vec![0.0; rows],
            scale: vec![1.0; rows],
        }
    }

    /// Min-max fit over the columns of `samples`; constant rows get scale 1.
    pub fn fit(samples: &DMatrix<f64>) -> Result<Self> {
        if samples.ncols() == 0 {
            return Err(Error::EmptyInput("no samples to fit a feature scaling".into()));
        }
        let mut offset = Vec::with_capacity(samples.nrows());
        let mut scale = Vec::with_capacity(samples.nrows());
        for r in samples.row_iter() {
            let lo = r.min();
            let hi = r.max();
            offset.push(lo);
            scale.push(if hi > lo { hi - lo } else { 1.0 });
        }
        Ok(FeatureScaling { offset, scale })
    }

    pub fn rows(&self) -> usize {
        self.offset.len()
    }

    pub fn apply(&self, x: &mut [f64]) {
        for ((v, o), s) in x.iter_mut().zip(&self.offset).zip(&self.scale) {
            *v = (*v - o) / s;
        }
    }

    pub fn apply_columns(&self, m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if m.nrows() != self.rows() {
            return Err(Error::Shape(format!("{} feature rows for a {}-row scaling", m.nrows(), self.rows())));
        }
        Ok(DMatrix::from_fn(m.nrows(), m.ncols(), |r, c| (m[(r, c)] - self.offset[r]) / self.scale[r]))
    }

    /// The first `rows` coordinates only.
    pub fn truncate(&self, rows: usize) -> FeatureScaling {
        FeatureScaling {
            offset: self.offset[..rows].to_vec(),
            scale: self.scale[..rows].to_vec(),
        }
    }

    pub fn to_meta(&self) -> Vec<(String, String)> {
        vec![
            ("feature_offset".into(), format_floats(&self.offset)),
            ("feature_scale".into(), format_floats(&self.scale)),
        ]
    }

    pub fn from_meta(get: impl Fn(&str) -> Option<String>) -> Result<Self> {
        let read = |k: &str| {
            get(k)
                .ok_or_else(|| Error::Format(format!("missing `{k}` metadata")))
                .and_then(|v| parse_floats(&v))
        };
        let offset = read("feature_offset")?;
        let scale = read("feature_scale")?;
        if offset.len() != scale.len() || scale.iter().any(|s| !(*s > 0.0)) {
            return Err(Error::Format("inconsistent feature scaling metadata".into()));
        }
        Ok(FeatureScaling { offset, scale })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn maps_training_range_to_unit_interval() {
        let m = DMatrix::from_row_slice(2, 3, &[1.0, 3.0, 2.0, 5.0, 5.0, 5.0]);
        let s = FeatureScaling::fit(&m).unwrap();
        let out = s.apply_columns(&m).unwrap();
        assert_eq!(out.row(0).iter().copied().collect::<Vec<_>>(), vec![0.0, 1.0, 0.5]);
        assert!(out.row(1).iter().all(|&v| v == 0.0));
        let mut x = [3.0, 6.0];
        s.apply(&mut x);
        assert_eq!(x, [1.0, 1.0]);
    }

    #[test]
    fn meta_round_trip() {
        let s = FeatureScaling {
            offset: vec![0.1, -3.0],
            scale: vec![2.5, 1e6],
        };
        let meta = s.to_meta();
        let back = FeatureScaling::from_meta(|k| meta.iter().find(|(a, _)| a == k).map(|(_, v)| v.clone())).unwrap();
        assert_eq!(back, s);
        assert!(FeatureScaling::from_meta(|_| None).is_err());
    }
}
