//! Voxel-wise shape prior: bounding-box-normalized occupancy patches, a
//! learned shape dictionary, and ℓ1-regularized shape coding.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::sparse::{ksvd_with, reconstruct, Dictionary, KsvdOptions, KsvdResult, L1Solver, SparseCode};
use crate::volume::{BoundingBox, Geometry, Mask3D, Volume3D};

pub const PATCH_SIDE: usize = 16;
pub const PATCH_ROWS: usize = PATCH_SIDE * PATCH_SIDE;
pub const PATCH_COLUMNS: usize = 160;

/// 256 × 160 soft occupancy: column `k` is axial plane `k` of a 16×16×160
/// resampling of the region's bounding box, flattened x-fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchMatrix {
    values: DMatrix<f64>,
}

impl PatchMatrix {
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        if values.shape() != (PATCH_ROWS, PATCH_COLUMNS) {
            return Err(Error::Shape(format!(
                "patch matrix must be {PATCH_ROWS}x{PATCH_COLUMNS}, got {:?}",
                values.shape()
            )));
        }
        if values.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::Numeric("patch values must lie in [0, 1]".into()));
        }
        Ok(PatchMatrix { values })
    }

    pub fn zeros() -> Self {
        PatchMatrix {
            values: DMatrix::zeros(PATCH_ROWS, PATCH_COLUMNS),
        }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.values
    }

    /// Occupancy at fractional grid position `(u, v, w)`, each clamped into the grid.
    pub fn sample(&self, u: f64, v: f64, w: f64) -> f64 {
        let axis = |t: f64, n: usize| {
            let t = t.clamp(0.0, (n - 1) as f64);
            let i0 = (t.floor() as usize).min(n.saturating_sub(2));
            let f = if n == 1 { 0.0 } else { t - i0 as f64 };
            (i0, (i0 + 1).min(n - 1), f)
        };
        let (x0, x1, fx) = axis(u, PATCH_SIDE);
        let (y0, y1, fy) = axis(v, PATCH_SIDE);
        let (z0, z1, fz) = axis(w, PATCH_COLUMNS);
        let at = |x: usize, y: usize, z: usize| self.values[(x + PATCH_SIDE * y, z)];
        let lerp = |a: f64, b: f64, t: f64| a + (b - a) * t;
        let plane = |z| {
            lerp(
                lerp(at(x0, y0, z), at(x1, y0, z), fx),
                lerp(at(x0, y1, z), at(x1, y1, z), fx),
                fy,
            )
        };
        lerp(plane(z0), plane(z1), fz)
    }
}

/// Position of voxel index `i` of an axis with `extent` voxels starting at `lo`
/// on a grid of `n` cells spanning the same interval (cell centres aligned).
fn to_grid(i: usize, lo: usize, extent: usize, n: usize) -> f64 {
    (i as f64 - lo as f64 + 0.5) * n as f64 / extent as f64 - 0.5
}

fn to_voxel(g: usize, lo: usize, extent: usize, n: usize) -> f64 {
    lo as f64 + (g as f64 + 0.5) * extent as f64 / n as f64 - 0.5
}

pub fn extract_patch_matrix(mask: &Mask3D) -> Result<PatchMatrix> {
    let bb = mask
        .bounding_box()
        .ok_or_else(|| Error::EmptyInput("patch matrix of an empty mask".into()))?;
    extract_patch_matrix_in(mask, &bb)
}

/// Resamples the occupancy of `mask` inside `bb` (trilinear, sample
/// positions clamped into the box).
pub fn extract_patch_matrix_in(mask: &Mask3D, bb: &BoundingBox) -> Result<PatchMatrix> {
    let dims = mask.dims();
    if (0..3).any(|a| bb.lo[a] > bb.hi[a] || bb.hi[a] >= dims[a]) {
        return Err(Error::Shape(format!("box {bb:?} outside volume {dims:?}")));
    }
    let axis = |g: usize, a: usize, n: usize| {
        let t = to_voxel(g, bb.lo[a], bb.extent(a), n).clamp(bb.lo[a] as f64, bb.hi[a] as f64);
        let i0 = t.floor() as usize;
        let i1 = (i0 + 1).min(bb.hi[a]);
        (i0, i1, t - i0 as f64)
    };
    let occ = |x: usize, y: usize, z: usize| if mask.get(x, y, z) { 1.0 } else { 0.0 };
    let mut values = DMatrix::zeros(PATCH_ROWS, PATCH_COLUMNS);
    for w in 0..PATCH_COLUMNS {
        let (z0, z1, fz) = axis(w, 2, PATCH_COLUMNS);
        for v in 0..PATCH_SIDE {
            let (y0, y1, fy) = axis(v, 1, PATCH_SIDE);
            for u in 0..PATCH_SIDE {
                let (x0, x1, fx) = axis(u, 0, PATCH_SIDE);
                let mut acc = 0.0;
                for (z, wz) in [(z0, 1.0 - fz), (z1, fz)] {
                    for (y, wy) in [(y0, 1.0 - fy), (y1, fy)] {
                        for (x, wx) in [(x0, 1.0 - fx), (x1, fx)] {
                            let wgt = wx * wy * wz;
                            if wgt > 0.0 {
                                acc += wgt * occ(x, y, z);
                            }
                        }
                    }
                }
                values[(u + PATCH_SIDE * v, w)] = acc.clamp(0.0, 1.0);
            }
        }
    }
    PatchMatrix::new(values)
}

/// Paints a patch matrix back into `geometry` over the box `bb`; voxels
/// outside the box are 0.
pub fn patch_to_volume(p: &PatchMatrix, bb: &BoundingBox, geometry: Geometry) -> Volume3D {
    Volume3D::from_fn(geometry, |x, y, z| {
        if !bb.contains([x, y, z]) {
            return 0.0;
        }
        p.sample(
            to_grid(x, bb.lo[0], bb.extent(0), PATCH_SIDE),
            to_grid(y, bb.lo[1], bb.extent(1), PATCH_SIDE),
            to_grid(z, bb.lo[2], bb.extent(2), PATCH_COLUMNS),
        )
    })
}

/// Trains the shape dictionary on the patch matrices of `masks`, whose
/// columns are pooled as independent training signals.
pub fn train_shape_dictionary(masks: &[Mask3D], opts: &KsvdOptions) -> Result<KsvdResult> {
    if masks.is_empty() {
        return Err(Error::EmptyInput("no training masks".into()));
    }
    let patches = masks
        .par_iter()
        .map(extract_patch_matrix)
        .collect::<Result<Vec<_>>>()?;
    let cols: Vec<DVector<f64>> = patches
        .iter()
        .flat_map(|p| p.values.column_iter().map(|c| c.clone_owned()).collect::<Vec<_>>())
        .collect();
    let mut res = ksvd_with(&DMatrix::from_columns(&cols), opts)?;
    res.dictionary.label = "shape".into();
    res.dictionary.meta.push(("training_masks".into(), masks.len().to_string()));
    Ok(res)
}

/// Per-column ℓ1 shape codes of a patch matrix and the summed objective.
#[derive(Debug, Clone)]
pub struct ShapeFit {
    pub alpha: Vec<SparseCode>,
    /// `‖v_k − D α_k‖² + λ_k ‖α_k‖₁` per column.
    pub column_energy: Vec<f64>,
    /// Squared reconstruction residual per column.
    pub column_residual: Vec<f64>,
    pub energy: f64,
}

impl ShapeFit {
    /// Mean number of nonzero coefficients per column.
    pub fn mean_support(&self) -> f64 {
        self.alpha.iter().map(|a| a.nnz() as f64).sum::<f64>() / self.alpha.len() as f64
    }

    /// Fraction of columns coded by exactly one atom.
    pub fn one_sparse_fraction(&self) -> f64 {
        self.alpha.iter().filter(|a| a.nnz() == 1).count() as f64 / self.alpha.len() as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShapeSolveOptions {
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for ShapeSolveOptions {
    fn default() -> Self {
        ShapeSolveOptions {
            max_iter: 2000,
            tol: 1e-8,
        }
    }
}

pub fn shape_energy(v_t: &PatchMatrix, d_s: &Dictionary, lambda: f64) -> Result<ShapeFit> {
    shape_energy_weighted(v_t, d_s, &[lambda; PATCH_COLUMNS], &ShapeSolveOptions::default())
}

/// Shape coding with an individual ℓ1 weight per column.
pub fn shape_energy_weighted(
    v_t: &PatchMatrix,
    d_s: &Dictionary,
    lambdas: &[f64],
    opts: &ShapeSolveOptions,
) -> Result<ShapeFit> {
    if d_s.rows() != PATCH_ROWS {
        return Err(Error::Shape(format!("shape dictionary has {} rows, expected {PATCH_ROWS}", d_s.rows())));
    }
    if lambdas.len() != PATCH_COLUMNS {
        return Err(Error::Shape(format!("{} weights for {PATCH_COLUMNS} columns", lambdas.len())));
    }
    let solver = L1Solver::new(d_s);
    let per_col = (0..PATCH_COLUMNS)
        .into_par_iter()
        .map(|k| {
            let y = v_t.values.column(k);
            let a = solver.solve(y.as_slice(), lambdas[k], opts.max_iter, opts.tol)?;
            let res = (y - reconstruct(d_s, &a)?).norm_squared();
            Ok((res + lambdas[k] * a.l1_norm(), res, a))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut fit = ShapeFit {
        alpha: Vec::with_capacity(PATCH_COLUMNS),
        column_energy: Vec::with_capacity(PATCH_COLUMNS),
        column_residual: Vec::with_capacity(PATCH_COLUMNS),
        energy: 0.0,
    };
    for (e, r, a) in per_col {
        fit.energy += e;
        fit.column_energy.push(e);
        fit.column_residual.push(r);
        fit.alpha.push(a);
    }
    Ok(fit)
}

/// Columnwise `D α`, clamped to `[0, 1]`.
pub fn reconstruct_shape(d_s: &Dictionary, alpha: &[SparseCode]) -> Result<PatchMatrix> {
    if alpha.len() != PATCH_COLUMNS || d_s.rows() != PATCH_ROWS {
        return Err(Error::Shape(format!(
            "{} codes over a {}-row dictionary",
            alpha.len(),
            d_s.rows()
        )));
    }
    let mut values = DMatrix::zeros(PATCH_ROWS, PATCH_COLUMNS);
    for (k, a) in alpha.iter().enumerate() {
        let col = reconstruct(d_s, a)?.map(|v| v.clamp(0.0, 1.0));
        values.set_column(k, &col);
    }
    PatchMatrix::new(values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn ellipsoid(dims: [usize; 3], c: [f64; 3], r: [f64; 3]) -> Mask3D {
        Mask3D::from_fn(Geometry::unit(dims).unwrap(), |x, y, z| {
            let p = [x as f64, y as f64, z as f64];
            (0..3).map(|a| ((p[a] - c[a]) / r[a]).powi(2)).sum::<f64>() <= 1.0
        })
    }

    #[test]
    fn full_box_is_all_ones() {
        let m = Mask3D::from_fn(Geometry::unit([20, 20, 20]).unwrap(), |x, y, z| {
            (3..13).contains(&x) && (5..9).contains(&y) && (2..17).contains(&z)
        });
        let p = extract_patch_matrix(&m).unwrap();
        assert!(p.matrix().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn half_box_split_across_x() {
        let g = Geometry::unit([40, 20, 12]).unwrap();
        let m = Mask3D::from_fn(g, |x, y, z| (4..20).contains(&x) && (2..18).contains(&y) && (1..11).contains(&z));
        let bb = BoundingBox { lo: [4, 2, 1], hi: [35, 17, 10] };
        let p = extract_patch_matrix_in(&m, &bb).unwrap();
        for k in 0..PATCH_COLUMNS {
            for v in 0..PATCH_SIDE {
                for u in 0..PATCH_SIDE {
                    let expect = if u < 8 { 1.0 } else { 0.0 };
                    assert_eq!(p.matrix()[(u + 16 * v, k)], expect, "({u},{v},{k})");
                }
            }
        }
    }

    #[test]
    fn translation_invariant_and_bounded() {
        let a = ellipsoid([30, 30, 30], [10.0, 12.0, 11.0], [6.0, 8.0, 7.5]);
        let b = ellipsoid([30, 30, 30], [17.0, 15.0, 19.0], [6.0, 8.0, 7.5]);
        let pa = extract_patch_matrix(&a).unwrap();
        let pb = extract_patch_matrix(&b).unwrap();
        assert_eq!(pa, pb);
        assert!(pa.matrix().iter().all(|v| (0.0..=1.0).contains(v)));
        assert!(extract_patch_matrix(&Mask3D::empty(*a.geometry())).is_err());
    }

    #[test]
    fn painted_patch_recovers_mask_interior() {
        let m = ellipsoid([24, 24, 24], [12.0, 11.0, 12.0], [7.0, 8.0, 9.0]);
        let bb = m.bounding_box().unwrap();
        let p = extract_patch_matrix(&m).unwrap();
        let v = patch_to_volume(&p, &bb, *m.geometry());
        let agree = (0..m.geometry().len())
            .filter(|&i| (v.data()[i] >= 0.5) == m.data()[i])
            .count();
        assert!(agree as f64 / m.geometry().len() as f64 > 0.98);
    }

    #[test]
    fn single_shape_overfit() {
        let m = ellipsoid([24, 24, 30], [12.0, 12.0, 15.0], [8.0, 6.0, 12.0]);
        let res = train_shape_dictionary(std::slice::from_ref(&m), &KsvdOptions::new(32, 5, 10, 1)).unwrap();
        let p = extract_patch_matrix(&m).unwrap();
        let codes = res.codes.clone();
        let mut rec = DMatrix::zeros(PATCH_ROWS, PATCH_COLUMNS);
        for (k, a) in codes.iter().enumerate() {
            rec.set_column(k, &reconstruct(&res.dictionary, a).unwrap());
        }
        let rel = (p.matrix() - &rec).norm() / p.matrix().norm();
        assert!(rel < 0.05, "{rel}");
        assert_eq!(res.dictionary.label, "shape");
    }

    #[test]
    fn too_many_atoms_is_a_parameter_error() {
        let m = ellipsoid([12, 12, 12], [6.0, 6.0, 6.0], [4.0, 4.0, 4.0]);
        let r = train_shape_dictionary(&[m], &KsvdOptions::new(161, 5, 2, 1));
        assert!(matches!(r, Err(Error::Parameter(_))));
    }

    #[test]
    fn duplicated_training_mask() {
        let m = ellipsoid([20, 20, 24], [10.0, 9.0, 12.0], [6.0, 7.0, 10.0]);
        let opts = KsvdOptions::new(24, 4, 6, 3);
        let one = train_shape_dictionary(std::slice::from_ref(&m), &opts).unwrap();
        let two = train_shape_dictionary(&[m.clone(), m.clone()], &opts).unwrap();
        let p = extract_patch_matrix(&m).unwrap();
        let err = |d: &Dictionary, codes: &[SparseCode]| -> f64 {
            (0..PATCH_COLUMNS)
                .map(|k| (p.matrix().column(k) - reconstruct(d, &codes[k]).unwrap()).norm_squared())
                .sum()
        };
        let e1 = err(&one.dictionary, &one.codes);
        let e2 = err(&two.dictionary, &two.codes[..PATCH_COLUMNS]);
        assert!((e1 - e2).abs() < 1e-9, "{e1} vs {e2}");
    }

    fn random_shape_dictionary(seed: u64, atoms: usize) -> Dictionary {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Dictionary::from_columns(DMatrix::from_fn(PATCH_ROWS, atoms, |_, _| rng.random::<f64>())).unwrap()
    }

    #[test]
    fn representable_input_is_recovered() {
        let d = random_shape_dictionary(5, 12);
        let mut values = DMatrix::zeros(PATCH_ROWS, PATCH_COLUMNS);
        for k in 0..PATCH_COLUMNS {
            // scale keeps entries inside [0, 1]
            let a = d.atom(k % 12) * 0.5;
            values.set_column(k, &a);
        }
        let v = PatchMatrix::new(values).unwrap();
        let opts = ShapeSolveOptions { max_iter: 20000, tol: 1e-13 };
        let fit = shape_energy_weighted(&v, &d, &[1e-7; PATCH_COLUMNS], &opts).unwrap();
        let rec = reconstruct_shape(&d, &fit.alpha).unwrap();
        let err = (v.matrix() - rec.matrix()).norm_squared();
        assert!(err < 1e-6, "{err}");
    }

    #[test]
    fn full_shrinkage_and_zero_input() {
        let d = random_shape_dictionary(6, 10);
        let m = ellipsoid([16, 16, 16], [8.0, 8.0, 8.0], [5.0, 6.0, 7.0]);
        let v = extract_patch_matrix(&m).unwrap();
        let corr = (d.matrix().transpose() * v.matrix()).amax();
        let fit = shape_energy(&v, &d, 2.0 * corr).unwrap();
        assert!(fit.alpha.iter().all(|a| a.nnz() == 0));
        assert!((fit.energy - v.matrix().norm_squared()).abs() < 1e-9);

        let z = shape_energy(&PatchMatrix::zeros(), &d, 0.7).unwrap();
        assert_eq!(z.energy, 0.0);
        assert!(z.alpha.iter().all(|a| a.nnz() == 0));
    }

    #[test]
    fn energy_matches_independent_recomputation() {
        let d = random_shape_dictionary(7, 16);
        let m = ellipsoid([18, 18, 18], [9.0, 8.0, 9.0], [6.0, 5.0, 7.0]);
        let v = extract_patch_matrix(&m).unwrap();
        let fit = shape_energy(&v, &d, 0.7).unwrap();
        let mut a = DMatrix::zeros(d.atoms(), PATCH_COLUMNS);
        for (k, code) in fit.alpha.iter().enumerate() {
            a.set_column(k, &DVector::from_vec(code.to_dense()));
        }
        let direct = (v.matrix() - d.matrix() * &a).norm_squared() + 0.7 * a.iter().map(|x| x.abs()).sum::<f64>();
        assert!((direct - fit.energy).abs() < 1e-10 * direct.max(1.0));
        assert!(fit.energy <= v.matrix().norm_squared());
        assert!(fit.mean_support() >= 0.0 && fit.one_sparse_fraction() <= 1.0);
    }

    #[test]
    fn reconstruction_is_clamped() {
        let d = Dictionary::new(DMatrix::from_fn(PATCH_ROWS, 1, |_, _| 1.0 / 16.0)).unwrap();
        let alpha = vec![SparseCode::from_pairs(1, vec![(0, 40.0)]); PATCH_COLUMNS];
        let r = reconstruct_shape(&d, &alpha).unwrap();
        assert!(r.matrix().iter().all(|&v| v == 1.0));
        let zero = reconstruct_shape(&d, &vec![SparseCode::zero(1); PATCH_COLUMNS]).unwrap();
        assert_eq!(zero, PatchMatrix::zeros());
    }
}
