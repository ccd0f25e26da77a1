//! Small dense helpers shared by the OCP, continuation and certificate code.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// `(A + Aᵀ) / 2`.
pub fn symmetrize(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a + a.transpose()) * 0.5
}

/// `⟨S⟩ = S + Sᵀ`.
pub fn sym_part(s: &DMatrix<f64>) -> DMatrix<f64> {
    s + s.transpose()
}

/// Eigenvalues of the symmetric part of `a`, ascending.
pub fn sym_eigenvalues(a: &DMatrix<f64>) -> Vec<f64> {
    let mut ev: Vec<f64> = symmetrize(a).symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

pub fn max_eigenvalue(a: &DMatrix<f64>) -> f64 {
    sym_eigenvalues(a).last().copied().unwrap_or(f64::NAN)
}

pub fn min_eigenvalue(a: &DMatrix<f64>) -> f64 {
    sym_eigenvalues(a).first().copied().unwrap_or(f64::NAN)
}

/// Spectral norm of a symmetric matrix (largest eigenvalue magnitude).
pub fn sym_spectral_norm(a: &DMatrix<f64>) -> f64 {
    sym_eigenvalues(a)
        .iter()
        .fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

/// Spectral norm (largest singular value) of a general matrix.
pub fn spectral_norm(a: &DMatrix<f64>) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    max_eigenvalue(&(a.transpose() * a)).max(0.0).sqrt()
}

/// Solves `h * x = rhs` for symmetric positive-definite `h` by Cholesky.
///
/// A failed factorization reports the minimum eigenvalue of `h` together
/// with the time `t` it was encountered at.
pub fn spd_solve(h: &DMatrix<f64>, rhs: &DMatrix<f64>, t: f64) -> Result<DMatrix<f64>> {
    match h.clone().cholesky() {
        Some(chol) => Ok(chol.solve(rhs)),
        None => Err(Error::AssumptionViolation {
            min_eigenvalue: min_eigenvalue(h),
            t,
        }),
    }
}

pub fn spd_solve_vec(h: &DMatrix<f64>, rhs: &DVector<f64>, t: f64) -> Result<DVector<f64>> {
    match h.clone().cholesky() {
        Some(chol) => Ok(chol.solve(rhs)),
        None => Err(Error::AssumptionViolation {
            min_eigenvalue: min_eigenvalue(h),
            t,
        }),
    }
}

/// Finite-difference step for a coordinate of magnitude `value`.
#[inline]
pub fn fd_step(base: f64, value: f64) -> f64 {
    base * (1.0 + value.abs())
}

pub fn all_finite(v: &DVector<f64>) -> bool {
    v.iter().all(|x| x.is_finite())
}
