use std::collections::HashMap;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use super::dictionary::{Dictionary, SparseCode};
use super::omp::omp;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KsvdOptions {
    pub atoms: usize,
    pub sparsity: usize,
    pub iterations: usize,
    pub seed: u64,
    /// Atoms whose absolute inner product with an earlier atom exceeds this
    /// are replaced before the next coding pass.
    pub coherence_limit: f64,
}

impl KsvdOptions {
    pub fn new(atoms: usize, sparsity: usize, iterations: usize, seed: u64) -> Self {
        KsvdOptions {
            atoms,
            sparsity,
            iterations,
            seed,
            coherence_limit: 0.99,
        }
    }
}

#[derive(Debug, Clone)]
pub struct KsvdResult {
    pub dictionary: Dictionary,
    /// One code per training column.
    pub codes: Vec<SparseCode>,
    /// `‖Y − DA‖²_F` after each coding pass.
    pub after_coding: Vec<f64>,
    /// `‖Y − DA‖²_F` after each dictionary-update sweep.
    pub after_update: Vec<f64>,
}

impl KsvdResult {
    pub fn objective(&self) -> f64 {
        *self.after_update.last().expect("at least one iteration")
    }
}

pub fn ksvd(y: &DMatrix<f64>, k: usize, t0: usize, iters: usize, seed: u64) -> Result<KsvdResult> {
    ksvd_with(y, &KsvdOptions::new(k, t0, iters, seed))
}

/// K-SVD on the columns of `y`.
///
/// Repeated training columns are merged into one weighted column, so the
/// result does not depend on how often a sample appears, only on which
/// samples appear.
pub fn ksvd_with(y: &DMatrix<f64>, opts: &KsvdOptions) -> Result<KsvdResult> {
    let (m, n) = y.shape();
    let k = opts.atoms;
    if opts.iterations == 0 {
        return Err(Error::Parameter("K-SVD needs at least one iteration".into()));
    }
    if k == 0 || opts.sparsity == 0 {
        return Err(Error::Parameter("K-SVD needs at least one atom and sparsity ≥ 1".into()));
    }
    if m == 0 || n < k {
        return Err(Error::Parameter(format!("{n} training columns for {k} atoms")));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("training matrix has non-finite entries".into()));
    }

    let (samples, mut weights, owner) = merge_duplicates(y);
    // relative multiplicities keep uniformly duplicated training sets bit-identical
    let unit = weights.iter().copied().fold(f64::INFINITY, f64::min);
    weights.iter_mut().for_each(|w| *w /= unit);
    let u = samples.ncols();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);

    let nonzero: Vec<usize> = (0..u).filter(|&i| samples.column(i).norm() > 0.0).collect();
    let picked = sample(&mut rng, nonzero.len(), k.min(nonzero.len())).into_vec();
    let mut atoms = DMatrix::zeros(m, k);
    for j in 0..k {
        let v = match picked.get(j) {
            Some(&p) => samples.column(nonzero[p]).normalize(),
            None => random_unit(m, &mut rng),
        };
        atoms.set_column(j, &v);
    }

    let mut codes = vec![SparseCode::zero(k); u];
    let mut residual = samples.clone();
    let mut after_coding = Vec::with_capacity(opts.iterations);
    let mut after_update = Vec::with_capacity(opts.iterations);

    for it in 0..opts.iterations {
        if it > 0 {
            replace_coherent(&mut atoms, &samples, &residual, opts.coherence_limit, &mut rng);
        }
        let dict = Dictionary::new(atoms.clone())?;
        codes = (0..u)
            .into_par_iter()
            .map(|i| omp(&dict, samples.column(i).as_slice(), opts.sparsity, 0.0))
            .collect::<Result<_>>()?;
        for i in 0..u {
            let mut r = samples.column(i).clone_owned();
            for (&j, &c) in codes[i].support.iter().zip(&codes[i].coefficients) {
                r.axpy(-c, &atoms.column(j), 1.0);
            }
            residual.set_column(i, &r);
        }
        after_coding.push(unit * objective(&residual, &weights));

        let mut users: Vec<Vec<usize>> = vec![Vec::new(); k];
        for (i, c) in codes.iter().enumerate() {
            for &j in &c.support {
                users[j].push(i);
            }
        }
        let mut taken = vec![false; u];
        for j in 0..k {
            if users[j].is_empty() {
                let v = worst_represented(&samples, &residual, &mut taken).unwrap_or_else(|| random_unit(m, &mut rng));
                atoms.set_column(j, &v);
                continue;
            }
            update_atom(j, &users[j], &mut atoms, &mut codes, &mut residual, &weights);
        }
        after_update.push(unit * objective(&residual, &weights));
    }

    let mut dictionary = Dictionary::new(atoms)?;
    dictionary.meta.push(("seed".into(), opts.seed.to_string()));
    dictionary.meta.push(("sparsity".into(), opts.sparsity.to_string()));
    dictionary.meta.push(("iterations".into(), opts.iterations.to_string()));
    dictionary.meta.push(("training_columns".into(), n.to_string()));
    Ok(KsvdResult {
        dictionary,
        codes: owner.iter().map(|&i| codes[i].clone()).collect(),
        after_coding,
        after_update,
    })
}

/// Distinct columns, their multiplicities, and the distinct index of every input column.
fn merge_duplicates(y: &DMatrix<f64>) -> (DMatrix<f64>, Vec<f64>, Vec<usize>) {
    let mut seen: HashMap<Vec<u64>, usize> = HashMap::new();
    let mut firsts = Vec::new();
    let mut weights: Vec<f64> = Vec::new();
    let owner = y
        .column_iter()
        .enumerate()
        .map(|(i, c)| {
            let key: Vec<u64> = c.iter().map(|v| (v + 0.0).to_bits()).collect();
            *seen
                .entry(key)
                .and_modify(|&mut s| weights[s] += 1.0)
                .or_insert_with(|| {
                    firsts.push(i);
                    weights.push(1.0);
                    firsts.len() - 1
                })
        })
        .collect();
    let cols: Vec<DVector<f64>> = firsts.iter().map(|&i| y.column(i).clone_owned()).collect();
    (DMatrix::from_columns(&cols), weights, owner)
}

fn objective(residual: &DMatrix<f64>, weights: &[f64]) -> f64 {
    residual
        .column_iter()
        .zip(weights)
        .map(|(r, w)| w * r.norm_squared())
        .sum()
}

fn random_unit(m: usize, rng: &mut ChaCha8Rng) -> DVector<f64> {
    loop {
        let v = DVector::from_fn(m, |_, _| StandardNormal.sample(rng));
        let n: f64 = v.norm();
        if n > 1e-8 {
            return v / n;
        }
    }
}

/// Normalized training column with the largest residual that has not been
/// used yet in this sweep.
fn worst_represented(samples: &DMatrix<f64>, residual: &DMatrix<f64>, taken: &mut [bool]) -> Option<DVector<f64>> {
    let mut best = None;
    let mut best_err = 1e-20;
    for (i, r) in residual.column_iter().enumerate() {
        let e = r.norm_squared();
        if !taken[i] && e > best_err {
            best_err = e;
            best = Some(i);
        }
    }
    let i = best?;
    taken[i] = true;
    let c = samples.column(i);
    (c.norm() > 0.0).then(|| c.normalize())
}

fn replace_coherent(
    atoms: &mut DMatrix<f64>,
    samples: &DMatrix<f64>,
    residual: &DMatrix<f64>,
    limit: f64,
    rng: &mut ChaCha8Rng,
) {
    let mut taken = vec![false; residual.ncols()];
    for j in 1..atoms.ncols() {
        let coherent = (0..j).any(|i| atoms.column(i).dot(&atoms.column(j)).abs() > limit);
        if coherent {
            let v = worst_represented(samples, residual, &mut taken).unwrap_or_else(|| random_unit(atoms.nrows(), rng));
            atoms.set_column(j, &v);
        }
    }
}

/// Rank-1 refit of atom `j` and its coefficients on the signals using it.
fn update_atom(
    j: usize,
    users: &[usize],
    atoms: &mut DMatrix<f64>,
    codes: &mut [SparseCode],
    residual: &mut DMatrix<f64>,
    weights: &[f64],
) {
    let m = atoms.nrows();
    let nu = users.len();
    let pos: Vec<usize> = users
        .iter()
        .map(|&i| codes[i].support.binary_search(&j).expect("user holds the atom"))
        .collect();
    let d = atoms.column(j).clone_owned();
    let mut e = DMatrix::zeros(m, nu);
    let mut old_err = 0.0;
    for (c, (&i, &p)) in users.iter().zip(&pos).enumerate() {
        let mut col = residual.column(i).clone_owned();
        old_err += weights[i] * col.norm_squared();
        col.axpy(codes[i].coefficients[p], &d, 1.0);
        e.set_column(c, &col);
    }
    let sw: Vec<f64> = users.iter().map(|&i| weights[i].sqrt()).collect();
    let ew = DMatrix::from_fn(m, nu, |r, c| e[(r, c)] * sw[c]);

    let mut u = if m <= nu {
        let eig = SymmetricEigen::new(&ew * ew.transpose());
        eig.eigenvectors.column(eig.eigenvalues.imax()).clone_owned()
    } else {
        let eig = SymmetricEigen::new(ew.transpose() * &ew);
        &ew * eig.eigenvectors.column(eig.eigenvalues.imax())
    };
    let un = u.norm();
    if !(un > 0.0) || !un.is_finite() {
        return;
    }
    u /= un;
    if u[u.iamax()] < 0.0 {
        u.neg_mut();
    }

    let x: Vec<f64> = (0..nu).map(|c| u.dot(&e.column(c))).collect();
    let mut new_cols = Vec::with_capacity(nu);
    let mut new_err = 0.0;
    for (c, &i) in users.iter().enumerate() {
        let mut col = e.column(c).clone_owned();
        col.axpy(-x[c], &u, 1.0);
        new_err += weights[i] * col.norm_squared();
        new_cols.push(col);
    }
    // the eigenvector is only accurate to rounding; never accept a worse fit
    if new_err > old_err {
        return;
    }
    atoms.set_column(j, &u);
    for (c, (&i, &p)) in users.iter().zip(&pos).enumerate() {
        codes[i].coefficients[p] = x[c];
        residual.set_column(i, &new_cols[c]);
    }
}
