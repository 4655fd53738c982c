//! Dense linear-algebra helpers shared by the realizations.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::gaussian_matrix;

/// Absolute symmetry tolerance, scaled by `max(1, max|h_ij|)`.
pub const SYMMETRY_TOL: f64 = 1e-8;
/// Eigenvalues in `[-PSD_CLAMP_TOL, 0)` are treated as rounding and clamped to 0.
pub const PSD_CLAMP_TOL: f64 = 1e-10;

/// Haar-distributed matrix with orthonormal columns (`rows ≥ cols`).
///
/// QR of a Gaussian matrix, with each column of `Q` multiplied by the sign of
/// the matching diagonal entry of `R` so the distribution is uniform.
pub fn haar_orthonormal_columns(rng: &mut impl Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    assert!(rows >= cols, "need rows >= cols, got {rows}x{cols}");
    let g = gaussian_matrix(rng, rows, cols);
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..cols {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

pub fn haar_orthogonal(rng: &mut impl Rng, n: usize) -> DMatrix<f64> {
    haar_orthonormal_columns(rng, n, n)
}

pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

pub fn asymmetry(m: &DMatrix<f64>) -> f64 {
    max_abs(&(m - m.transpose()))
}

/// Ascending eigenvalues of a symmetric matrix (the strict lower triangle is
/// trusted; call [`validate_psd`] first when the input is untrusted).
pub fn symmetric_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    let mut ev: Vec<f64> = SymmetricEigen::new(m.clone()).eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| a.total_cmp(b));
    ev
}

/// Checks symmetry and positive semidefiniteness, returning the ascending
/// spectrum with tiny negative eigenvalues clamped to zero.
pub fn validate_psd(m: &DMatrix<f64>) -> Result<Vec<f64>> {
    if !m.is_square() {
        return Err(Error::Validation(format!(
            "matrix must be square, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::Validation("matrix has non-finite entries".into()));
    }
    let scale = max_abs(m).max(1.0);
    let asym = asymmetry(m);
    if asym > SYMMETRY_TOL * scale {
        return Err(Error::Validation(format!(
            "symmetry check failed: max |H - H^T| = {asym:e}"
        )));
    }
    let sym = (m + m.transpose()) * 0.5;
    let mut ev = symmetric_eigenvalues(&sym);
    if let Some(&lo) = ev.first() {
        if lo < -PSD_CLAMP_TOL * scale {
            return Err(Error::Validation(format!(
                "positive-semidefinite check failed: smallest eigenvalue {lo:e}"
            )));
        }
    }
    for v in ev.iter_mut() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    Ok(ev)
}

pub fn singular_values(m: &DMatrix<f64>) -> Vec<f64> {
    let mut sv: Vec<f64> = m.singular_values().iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    sv
}

pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    singular_values(m).first().copied().unwrap_or(0.0)
}

/// Column-major vectorization, so that `vec(ACB) = (Bᵀ ⊗ A) vec(C)`.
pub fn vec_col_major(m: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_column_slice(m.as_slice())
}

pub fn unvec_col_major(v: &DVector<f64>, rows: usize, cols: usize) -> DMatrix<f64> {
    assert_eq!(v.len(), rows * cols);
    DMatrix::from_column_slice(rows, cols, v.as_slice())
}

/// `‖[a; b]‖₂`.
pub fn stacked_norm(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a.norm_squared() + b.norm_squared()).sqrt()
}
