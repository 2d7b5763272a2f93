//! Small dense symmetric-matrix helpers used across the crate.

use nalgebra::{DMatrix, DVector};

pub(crate) fn sym_eigenvalues(m: &DMatrix<f64>) -> DVector<f64> {
    m.clone().symmetric_eigen().eigenvalues
}

pub(crate) fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    sym_eigenvalues(m).iter().copied().fold(f64::INFINITY, f64::min)
}

pub(crate) fn max_eigenvalue(m: &DMatrix<f64>) -> f64 {
    sym_eigenvalues(m).iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

/// Spectral norm of a symmetric matrix, the largest eigenvalue magnitude.
pub(crate) fn spectral_norm_sym(m: &DMatrix<f64>) -> f64 {
    sym_eigenvalues(m).iter().fold(0.0, |acc, &l| acc.max(l.abs()))
}

pub(crate) fn symmetry_error(m: &DMatrix<f64>) -> f64 {
    let mut err: f64 = 0.0;
    for i in 0..m.nrows() {
        for j in i + 1..m.ncols() {
            err = err.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    err
}

pub(crate) fn is_diagonal(m: &DMatrix<f64>) -> bool {
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            if i != j && m[(i, j)] != 0.0 {
                return false;
            }
        }
    }
    true
}
