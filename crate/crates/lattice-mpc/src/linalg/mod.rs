//! Dense linear-algebra kernels shared by every other module: finiteness
//! and definiteness checks, a strictly convex active-set QP solver, and a
//! discrete algebraic Riccati solver.

mod qp;
mod riccati;

pub use qp::{solve_qp, DenseQp, QpOptions, QpSolution, QpStatus};
pub use riccati::{lqr_gain, solve_dare};

use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};

/// Fails with `NotFinite` if any entry is NaN or infinite.
pub fn check_finite_mat(context: &'static str, m: &DMatrix<f64>) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NotFinite { context })
    }
}

pub fn check_finite_vec(context: &'static str, v: &DVector<f64>) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NotFinite { context })
    }
}

pub fn inf_norm_mat(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0, |acc, v| acc.max(v.abs()))
}

pub fn inf_norm_vec(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0, |acc, x| acc.max(x.abs()))
}

/// Largest eigenvalue magnitude of a real square matrix.
pub fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    m.complex_eigenvalues()
        .iter()
        .fold(0.0, |acc: f64, ev| acc.max(ev.norm()))
}

/// Symmetry check up to `tol` relative to the largest entry.
pub fn is_symmetric(m: &DMatrix<f64>, tol: f64) -> bool {
    if !m.is_square() {
        return false;
    }
    let scale = inf_norm_mat(m).max(1.0);
    for i in 0..m.nrows() {
        for j in (i + 1)..m.ncols() {
            if (m[(i, j)] - m[(j, i)]).abs() > tol * scale {
                return false;
            }
        }
    }
    true
}

/// Checks symmetry and positive semidefiniteness via the symmetric
/// eigendecomposition; the most negative admissible eigenvalue is
/// `-tol * max(1, |m|_inf)`.
pub fn check_spsd(context: &'static str, m: &DMatrix<f64>, tol: f64) -> Result<()> {
    if !is_symmetric(m, 1e-10) {
        return Err(Error::NotSpd { context });
    }
    let eig = m.clone().symmetric_eigenvalues();
    let floor = -tol * inf_norm_mat(m).max(1.0);
    if let Some(min) = eig.iter().cloned().reduce(f64::min) {
        if min < floor {
            return Err(Error::NotPsd {
                context,
                value: min,
            });
        }
    }
    Ok(())
}

/// Checks symmetry and positive definiteness via Cholesky.
pub fn check_spd(context: &'static str, m: &DMatrix<f64>) -> Result<()> {
    if !is_symmetric(m, 1e-10) {
        return Err(Error::NotSpd { context });
    }
    match nalgebra::Cholesky::new(m.clone()) {
        Some(_) => Ok(()),
        None => Err(Error::NotSpd { context }),
    }
}
