//! Dense linear-algebra backend for the oracles and stability certificates.
//!
//! Systems here are small (|S| up to a few hundred), so everything is direct:
//! LU with partial pivoting for solves, symmetric eigendecomposition for
//! quadratic-form verdicts, SVD for spectral norms and rank.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// A pivot below this magnitude marks the system as singular.
pub const SINGULAR_PIVOT_TOL: f64 = 1e-12;

/// Solve `a x = b` by LU with partial pivoting.
///
/// `context` names the quantity being computed so singular failures carry a
/// usable diagnostic (min pivot and a condition-number estimate from the SVD).
pub fn solve(a: &DMatrix<f64>, b: &DVector<f64>, context: &'static str) -> Result<DVector<f64>> {
    if a.nrows() != a.ncols() {
        return Err(Error::NotSquare {
            rows: a.nrows(),
            cols: a.ncols(),
        });
    }
    if a.nrows() != b.len() {
        return Err(Error::Shape(format!(
            "{}: matrix is {}x{} but rhs has length {}",
            context,
            a.nrows(),
            a.ncols(),
            b.len()
        )));
    }
    let lu = a.clone().lu();
    let min_pivot = lu.u().diagonal().iter().fold(f64::INFINITY, |m, p| m.min(p.abs()));
    if min_pivot.is_nan() || min_pivot <= SINGULAR_PIVOT_TOL {
        return Err(Error::Singular {
            context,
            min_pivot,
            condition: condition_estimate(a),
        });
    }
    lu.solve(b).ok_or(Error::Singular {
        context,
        min_pivot,
        condition: condition_estimate(a),
    })
}

/// Ratio of extreme singular values; `inf` when numerically rank-deficient.
pub fn condition_estimate(a: &DMatrix<f64>) -> f64 {
    let sv = a.clone().singular_values();
    let max = sv.max();
    let min = sv.min();
    if min > 0.0 {
        max / min
    } else {
        f64::INFINITY
    }
}

/// Largest singular value (operator 2-norm).
pub fn spectral_norm(a: &DMatrix<f64>) -> f64 {
    a.clone().singular_values().max()
}

/// Smallest eigenvalue of the symmetric part `(a + a^T) / 2`.
pub fn min_symmetric_eigenvalue(a: &DMatrix<f64>) -> Result<f64> {
    if a.nrows() != a.ncols() {
        return Err(Error::NotSquare {
            rows: a.nrows(),
            cols: a.ncols(),
        });
    }
    let sym = (a + a.transpose()) * 0.5;
    let eigs = sym.symmetric_eigenvalues();
    Ok(eigs.min())
}

/// Largest eigenvalue modulus.
pub fn spectral_radius(a: &DMatrix<f64>) -> f64 {
    a.clone()
        .complex_eigenvalues()
        .iter()
        .fold(0.0f64, |m, z| m.max(z.norm()))
}

/// Numerical rank from singular values, relative tolerance `tol * max_sv`.
pub fn rank(a: &DMatrix<f64>, tol: f64) -> usize {
    let sv = a.clone().singular_values();
    let max = sv.max();
    if max == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > tol * max).count()
}
