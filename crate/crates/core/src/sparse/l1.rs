use nalgebra::{DMatrix, DVector};

use super::dictionary::{reconstruct, Dictionary, SparseCode};
use crate::error::{Error, Result};

/// Proximal gradient (ISTA) solver for `min_α ‖y − Dα‖²₂ + λ‖α‖₁`.
///
/// The Gram matrix and step size are computed once per dictionary, so one
/// solver can code many signals.
#[derive(Debug, Clone)]
pub struct L1Solver {
    d: DMatrix<f64>,
    gram: DMatrix<f64>,
    lipschitz: f64,
}

impl L1Solver {
    pub fn new(d: &Dictionary) -> Self {
        let m = d.matrix().clone();
        let gram = m.transpose() * &m;
        let lipschitz = largest_eigenvalue_bound(&gram);
        L1Solver { d: m, gram, lipschitz }
    }

    /// Upper bound on the largest eigenvalue of `DᵀD` used as step size.
    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    pub fn solve(&self, y: &[f64], lambda: f64, max_iter: usize, tol: f64) -> Result<SparseCode> {
        self.iterate(y, lambda, max_iter, tol, None)
    }

    /// Like [`solve`](Self::solve), also returning the objective after every iteration.
    pub fn solve_traced(&self, y: &[f64], lambda: f64, max_iter: usize, tol: f64) -> Result<(SparseCode, Vec<f64>)> {
        let mut trace = Vec::new();
        let code = self.iterate(y, lambda, max_iter, tol, Some(&mut trace))?;
        Ok((code, trace))
    }

    fn iterate(
        &self,
        y: &[f64],
        lambda: f64,
        max_iter: usize,
        tol: f64,
        mut trace: Option<&mut Vec<f64>>,
    ) -> Result<SparseCode> {
        if y.len() != self.d.nrows() {
            return Err(Error::Shape(format!("signal of length {} for {}-row dictionary", y.len(), self.d.nrows())));
        }
        if !(lambda >= 0.0) {
            return Err(Error::Parameter(format!("ℓ1 weight must be non-negative, got {lambda}")));
        }
        let yv = DVector::from_column_slice(y);
        let b = self.d.transpose() * &yv;
        let k = b.len();
        let step = 1.0 / self.lipschitz;
        let thresh = 0.5 * lambda * step;
        let mut alpha = DVector::zeros(k);
        for _ in 0..max_iter {
            let grad = &self.gram * &alpha - &b;
            let mut change: f64 = 0.0;
            let next = DVector::from_fn(k, |j, _| {
                let z = alpha[j] - step * grad[j];
                let v = z.signum() * (z.abs() - thresh).max(0.0);
                change = change.max((v - alpha[j]).abs());
                v
            });
            alpha = next;
            if let Some(t) = trace.as_deref_mut() {
                let r = &yv - &self.d * &alpha;
                t.push(r.norm_squared() + lambda * alpha.lp_norm(1));
            }
            if change < tol {
                break;
            }
        }
        Ok(SparseCode::from_dense(alpha.as_slice()))
    }
}

/// Power-iteration estimate inflated by 5%, capped by the trace (a certain bound).
fn largest_eigenvalue_bound(gram: &DMatrix<f64>) -> f64 {
    let n = gram.nrows();
    let mut v = DVector::from_fn(n, |i, _| 1.0 + i as f64 / n as f64);
    v.normalize_mut();
    let mut est = 0.0;
    for _ in 0..200 {
        let w = gram * &v;
        let next = v.dot(&w);
        let nw = w.norm();
        if nw == 0.0 {
            break;
        }
        v = w / nw;
        if (next - est).abs() <= 1e-12 * next {
            est = next;
            break;
        }
        est = next;
    }
    (1.05 * est).min(gram.trace()).max(f64::MIN_POSITIVE)
}

pub fn solve_l1(d: &Dictionary, y: &[f64], lambda: f64, max_iter: usize, tol: f64) -> Result<SparseCode> {
    L1Solver::new(d).solve(y, lambda, max_iter, tol)
}

/// `‖y − Dα‖²₂ + λ‖α‖₁`.
pub fn l1_objective(d: &Dictionary, y: &[f64], a: &SparseCode, lambda: f64) -> Result<f64> {
    d.check_signal(y.len())?;
    let r = DVector::from_column_slice(y) - reconstruct(d, a)?;
    Ok(r.norm_squared() + lambda * a.l1_norm())
}
