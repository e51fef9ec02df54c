//! Small dense complex helpers shared across modules.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{invalid, Result};

pub type CMatrix = DMatrix<Complex64>;

pub const ZERO: Complex64 = Complex64::new(0.0, 0.0);
pub const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Real part of `v^H A v`. The imaginary residue of a Hermitian form is dropped.
pub fn quadratic_form(a: &CMatrix, v: &[Complex64]) -> Result<f64> {
    if a.nrows() != v.len() || a.ncols() != v.len() {
        return invalid(format!("matrix is {}x{} but vector has length {}", a.nrows(), a.ncols(), v.len()));
    }
    Ok(quadratic_form_unchecked(a, v))
}

pub(crate) fn quadratic_form_unchecked(a: &CMatrix, v: &[Complex64]) -> f64 {
    let n = v.len();
    let mut acc = ZERO;
    for j in 0..n {
        let mut col = ZERO;
        for i in 0..n {
            col += v[i].conj() * a[(i, j)];
        }
        acc += col * v[j];
    }
    acc.re
}

pub fn frobenius_sq(a: &CMatrix) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum()
}

/// Largest deviation from Hermitian symmetry, `max |A - A^H|`.
pub fn hermitian_defect(a: &CMatrix) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..a.nrows() {
        for j in 0..a.ncols() {
            worst = worst.max((a[(i, j)] - a[(j, i)].conj()).norm());
        }
    }
    worst
}

/// Eigenvalues of the Hermitian part of `a`, ascending.
pub fn hermitian_eigenvalues(a: &CMatrix) -> Vec<f64> {
    let h = (a + a.adjoint()).scale(0.5);
    let mut ev: Vec<f64> = h.symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(|x, y| x.total_cmp(y));
    ev
}

/// Number of eigenvalues above `rel_tol * lambda_max`.
pub fn numerical_rank(a: &CMatrix, rel_tol: f64) -> usize {
    let ev = hermitian_eigenvalues(a);
    let max = ev.iter().fold(0.0f64, |m, &x| m.max(x.abs()));
    if max == 0.0 {
        return 0;
    }
    ev.iter().filter(|&&x| x > rel_tol * max).count()
}
