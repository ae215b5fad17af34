use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use super::dictionary::{Dictionary, SparseCode};
use crate::error::{Error, Result};

/// Orthogonal matching pursuit.
///
/// Each step picks the atom with the largest `|<residual, atom>|` (lowest index
/// on ties), then re-fits all selected coefficients by least squares. Stops
/// after `t0` atoms or once the residual norm is at most `tol`.
pub fn omp(d: &Dictionary, y: &[f64], t0: usize, tol: f64) -> Result<SparseCode> {
    d.check_signal(y.len())?;
    if t0 == 0 {
        return Err(Error::Parameter("OMP sparsity must be at least 1".into()));
    }
    let k = d.atoms();
    let y = DVector::from_column_slice(y);
    let scale = y.norm();
    let mut residual = y.clone();
    let mut basis: Vec<DVector<f64>> = Vec::new();
    // d[selected[j]] = Σ_{i ≤ j} r[j][i] · basis[i]
    let mut r: Vec<Vec<f64>> = Vec::new();
    let mut selected: Vec<usize> = Vec::new();
    let mut excluded = vec![false; k];

    while selected.len() < t0.min(k) && residual.norm() > tol {
        let mut best = None;
        let mut best_c = 0.0;
        for j in 0..k {
            if excluded[j] {
                continue;
            }
            let c = d.atom(j).dot(&residual).abs();
            if c > best_c {
                best_c = c;
                best = Some(j);
            }
        }
        let Some(j) = best else { break };
        if best_c <= 1e-13 * scale {
            break;
        }
        excluded[j] = true;

        let mut v = d.atom(j).clone_owned();
        let mut coeffs = vec![0.0; basis.len()];
        for _ in 0..2 {
            for (i, q) in basis.iter().enumerate() {
                let h = q.dot(&v);
                v.axpy(-h, q, 1.0);
                coeffs[i] += h;
            }
        }
        let nv = v.norm();
        if nv < 1e-10 {
            // already in the span of the selection
            continue;
        }
        v /= nv;
        coeffs.push(nv);
        let h = v.dot(&residual);
        residual.axpy(-h, &v, 1.0);
        // a second projection pass keeps the residual orthogonal to the basis
        for q in basis.iter().chain(std::iter::once(&v)) {
            let h = q.dot(&residual);
            residual.axpy(-h, q, 1.0);
        }
        basis.push(v);
        r.push(coeffs);
        selected.push(j);
    }

    // back substitution: R c = Qᵀ y
    let n = selected.len();
    let z: Vec<f64> = basis.iter().map(|q| q.dot(&y)).collect();
    let mut c = vec![0.0; n];
    for row in (0..n).rev() {
        let mut s = z[row];
        for col in row + 1..n {
            s -= r[col][row] * c[col];
        }
        c[row] = s / r[row][row];
    }
    Ok(SparseCode::from_pairs(k, selected.into_iter().zip(c).collect()))
}

/// Codes every column of `y` independently.
pub fn omp_columns(d: &Dictionary, y: &DMatrix<f64>, t0: usize, tol: f64) -> Result<Vec<SparseCode>> {
    (0..y.ncols())
        .into_par_iter()
        .map(|j| omp(d, y.column(j).as_slice(), t0, tol))
        .collect()
}
