//! Dictionaries, sparse coding (OMP, ℓ1) and K-SVD dictionary learning.
//!
//! Signals are columns; a matrix of samples is coded column by column.

mod dictionary;
mod io;
mod ksvd;
mod l1;
mod omp;

pub use dictionary::{reconstruct, Dictionary, SparseCode};
pub use io::{read_dictionary, write_dictionary};
pub use ksvd::{ksvd, ksvd_with, KsvdOptions, KsvdResult};
pub use l1::{l1_objective, solve_l1, L1Solver};
pub use omp::{omp, omp_columns};
