use std::ops::Range;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::sparse::{omp, reconstruct, Dictionary};
use crate::volume::{Geometry, Volume3D};

/// Region costs: `g` is the cost of labeling a voxel foreground,
/// `g_complement = 1 − g` the cost of labeling it background.
#[derive(Debug, Clone, PartialEq)]
pub struct DataTermField {
    g: Volume3D,
    g_complement: Volume3D,
}

impl DataTermField {
    pub fn new(g: Volume3D) -> Result<Self> {
        check_unit(&g, "data term")?;
        let g_complement = g.map(|v| 1.0 - v);
        Ok(DataTermField { g, g_complement })
    }

    /// Constant cost everywhere; `0.5` balances both regions.
    pub fn uniform(geometry: Geometry, g: f64) -> Result<Self> {
        DataTermField::new(Volume3D::filled(geometry, g))
    }

    pub fn g(&self) -> &Volume3D {
        &self.g
    }

    pub fn g_complement(&self) -> &Volume3D {
        &self.g_complement
    }
}

fn check_unit(v: &Volume3D, what: &str) -> Result<()> {
    if let Some(x) = v.data().iter().find(|x| !x.is_finite()) {
        return Err(Error::Numeric(format!("{what} holds {x}")));
    }
    if let Some(x) = v.data().iter().find(|x| !(0.0..=1.0).contains(*x)) {
        return Err(Error::Numeric(format!("{what} value {x} outside [0, 1]")));
    }
    Ok(())
}

/// Pointwise product of a normalized image residual and a normalized shape
/// residual, both on the same grid.
pub fn build_data_term(image_residual: &Volume3D, shape_residual: &Volume3D) -> Result<DataTermField> {
    if image_residual.geometry() != shape_residual.geometry() {
        return Err(Error::Shape("residual fields on different grids".into()));
    }
    check_unit(image_residual, "image residual")?;
    check_unit(shape_residual, "shape residual")?;
    let data = image_residual
        .data()
        .iter()
        .zip(shape_residual.data())
        .map(|(a, b)| a * b)
        .collect();
    DataTermField::new(Volume3D::new(*image_residual.geometry(), data)?)
}

/// Per-column coding residuals of a feature matrix against the liver and
/// non-liver dictionaries.
#[derive(Debug, Clone, PartialEq)]
pub struct GlobalResidual {
    /// Squared OMP residual `‖v − D a‖²` per column, after weighting.
    pub liver_raw: Vec<f64>,
    pub nonliver_raw: Vec<f64>,
    /// Raw residuals divided by their maximum (all zero when the maximum is 0).
    pub liver: Vec<f64>,
    pub nonliver: Vec<f64>,
}

impl GlobalResidual {
    pub fn pooled_liver(&self) -> f64 {
        self.liver_raw.iter().sum()
    }

    pub fn pooled_nonliver(&self) -> f64 {
        self.nonliver_raw.iter().sum()
    }
}

/// Codes every column of `columns` (already scaled) with both dictionaries.
/// Column residuals are multiplied by `weights` when given.
pub fn global_residual(
    columns: &DMatrix<f64>,
    liver: &Dictionary,
    nonliver: &Dictionary,
    t0: usize,
    weights: Option<&[f64]>,
) -> Result<GlobalResidual> {
    if let Some(w) = weights {
        if w.len() != columns.ncols() {
            return Err(Error::Shape(format!("{} weights for {} columns", w.len(), columns.ncols())));
        }
    }
    let residuals = |d: &Dictionary| -> Result<Vec<f64>> {
        (0..columns.ncols())
            .into_par_iter()
            .map(|j| {
                let y = columns.column(j);
                let a = omp(d, y.as_slice(), t0, 0.0)?;
                let r = (y - reconstruct(d, &a)?).norm_squared();
                Ok(r * weights.map_or(1.0, |w| w[j]))
            })
            .collect()
    };
    let liver_raw = residuals(liver)?;
    let nonliver_raw = residuals(nonliver)?;
    Ok(GlobalResidual {
        liver: normalize_by_max(&liver_raw),
        nonliver: normalize_by_max(&nonliver_raw),
        liver_raw,
        nonliver_raw,
    })
}

pub fn normalize_by_max(v: &[f64]) -> Vec<f64> {
    let m = v.iter().copied().fold(0.0, f64::max);
    if m > 0.0 {
        v.iter().map(|x| x / m).collect()
    } else {
        vec![0.0; v.len()]
    }
}

/// Voxel field in which every slice takes the mean value of the columns whose
/// slab covers it; slices outside every slab take `outside`.
pub fn back_project(values: &[f64], slabs: &[Range<usize>], geometry: Geometry, outside: f64) -> Result<Volume3D> {
    if values.len() != slabs.len() {
        return Err(Error::Shape(format!("{} values for {} slabs", values.len(), slabs.len())));
    }
    let nz = geometry.dims[2];
    let mut sum = vec![0.0; nz];
    let mut count = vec![0usize; nz];
    for (v, s) in values.iter().zip(slabs) {
        for z in s.start.min(nz)..s.end.min(nz) {
            sum[z] += v;
            count[z] += 1;
        }
    }
    let per_slice: Vec<f64> = sum
        .iter()
        .zip(&count)
        .map(|(&s, &c)| if c == 0 { outside } else { s / c as f64 })
        .collect();
    Ok(Volume3D::from_fn(geometry, |_, _, z| per_slice[z]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sparse::SparseCode;
    use nalgebra::DVector;
    use proptest::prelude::*;

    fn g3() -> Geometry {
        Geometry::unit([3, 3, 3]).unwrap()
    }

    #[test]
    fn product_cases() {
        let geom = g3();
        let f = build_data_term(&Volume3D::filled(geom, 0.7), &Volume3D::filled(geom, 0.0)).unwrap();
        assert!(f.g().data().iter().all(|&v| v == 0.0));
        assert!(f.g_complement().data().iter().all(|&v| v == 1.0));
        let f = build_data_term(&Volume3D::filled(geom, 1.0), &Volume3D::filled(geom, 1.0)).unwrap();
        assert!(f.g().data().iter().all(|&v| v == 1.0));
        let f = build_data_term(&Volume3D::filled(geom, 0.5), &Volume3D::filled(geom, 0.4)).unwrap();
        assert!(f.g().data().iter().all(|&v| v == 0.2));
    }

    #[test]
    fn rejects_bad_inputs() {
        let geom = g3();
        let nan = Volume3D::filled(geom, f64::NAN);
        assert!(matches!(build_data_term(&nan, &Volume3D::filled(geom, 0.5)), Err(Error::Numeric(_))));
        assert!(DataTermField::uniform(geom, 1.5).is_err());
        let other = Volume3D::filled(Geometry::unit([2, 2, 2]).unwrap(), 0.5);
        assert!(matches!(build_data_term(&other, &Volume3D::filled(geom, 0.5)), Err(Error::Shape(_))));
    }

    proptest! {
        #[test]
        fn complement_sums_to_one_exactly(vals in proptest::collection::vec(0.0f64..=1.0, 27)) {
            let v = Volume3D::new(g3(), vals).unwrap();
            let f = DataTermField::new(v).unwrap();
            for (a, b) in f.g().data().iter().zip(f.g_complement().data()) {
                prop_assert_eq!(a + b, 1.0);
            }
        }
    }

    fn identity_dict(n: usize, cols: Range<usize>) -> Dictionary {
        let m = DMatrix::from_fn(n, cols.len(), |r, c| f64::from(r == cols.start + c));
        Dictionary::new(m).unwrap()
    }

    #[test]
    fn representable_columns_have_zero_liver_residual() {
        let liver = identity_dict(6, 0..3);
        let nonliver = identity_dict(6, 3..6);
        let cols: Vec<DVector<f64>> = (0..5)
            .map(|j| {
                let a = SparseCode::from_pairs(3, vec![(j % 3, 1.0 + j as f64)]);
                reconstruct(&liver, &a).unwrap()
            })
            .collect();
        let r = global_residual(&DMatrix::from_columns(&cols), &liver, &nonliver, 2, None).unwrap();
        assert!(r.liver_raw.iter().all(|&v| v == 0.0));
        assert!(r.liver.iter().all(|&v| v == 0.0));
        assert!(r.nonliver.iter().any(|&v| v == 1.0));
    }

    #[test]
    fn orthogonal_columns_keep_their_energy() {
        let liver = identity_dict(6, 0..3);
        let nonliver = identity_dict(6, 3..6);
        let y = DMatrix::from_column_slice(6, 2, &[0.0, 0.0, 0.0, 1.0, 2.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 3.0]);
        let r = global_residual(&y, &liver, &nonliver, 1, None).unwrap();
        assert_eq!(r.liver_raw, vec![5.0, 9.0]);
        assert_eq!(r.liver, vec![5.0 / 9.0, 1.0]);
        assert_eq!(r.nonliver_raw, vec![1.0, 0.0]);
        let w = global_residual(&y, &liver, &nonliver, 1, Some(&[2.0, 1.0])).unwrap();
        assert_eq!(w.liver_raw, vec![10.0, 9.0]);
        assert_eq!(w.pooled_liver(), 19.0);
    }

    #[test]
    fn back_projection_by_slab() {
        let geom = Geometry::unit([2, 2, 6]).unwrap();
        let v = back_project(&[1.0, 2.0, 4.0], &[1..3, 3..4, 3..5], geom, -1.0).unwrap();
        let per_z: Vec<f64> = (0..6).map(|z| v.get(1, 1, z)).collect();
        assert_eq!(per_z, vec![-1.0, 1.0, 1.0, 3.0, 4.0, -1.0]);
        assert!(back_project(&[1.0], &[], geom, 0.0).is_err());
    }
}
