//! Small dense linear-algebra helpers for 4×4 covariance work.

use nalgebra::{Cholesky, Matrix4, SMatrix, SVector, SymmetricEigen};

use crate::scalar::{lit, Real};

/// Absolute tolerance used for symmetry and PSD checks.
pub fn cov_tolerance<T: Real, const D: usize>(m: &SMatrix<T, D, D>) -> T {
    let scale = m.amax().max(T::one());
    let eps_based = T::default_epsilon() * lit(64.0) * scale;
    eps_based.max(lit(1e-9))
}

/// Largest absolute asymmetry `max |m_ij - m_ji|`.
pub fn asymmetry<T: Real, const D: usize>(m: &SMatrix<T, D, D>) -> T {
    (m - m.transpose()).amax()
}

pub fn symmetrize<T: Real, const D: usize>(m: &SMatrix<T, D, D>) -> SMatrix<T, D, D> {
    (m + m.transpose()) * lit::<T>(0.5)
}

pub fn min_eigenvalue<T: Real>(m: &Matrix4<T>) -> T {
    SymmetricEigen::new(symmetrize(m)).eigenvalues.min()
}

/// Symmetric to tolerance and no eigenvalue below `-tol`.
pub fn is_symmetric_psd<T: Real>(m: &Matrix4<T>) -> bool {
    if !m.iter().all(|x| x.is_finite()) {
        return false;
    }
    let tol = cov_tolerance(m);
    asymmetry(m) <= tol && min_eigenvalue(m) >= -tol
}

/// Nearest symmetric PSD matrix in the Frobenius norm: symmetrize and clamp
/// negative eigenvalues to zero.
pub fn psd_repair<T: Real>(m: &Matrix4<T>) -> Matrix4<T> {
    let eig = SymmetricEigen::new(symmetrize(m));
    let clamped = eig.eigenvalues.map(|l| l.max(T::zero()));
    let v = eig.eigenvectors;
    symmetrize(&(v * Matrix4::from_diagonal(&clamped) * v.transpose()))
}

/// Lower-triangular Cholesky factor with additive diagonal jitter escalating
/// from 1e-12 to 1e-6 (relative to the matrix scale) before giving up.
///
/// Returns the factor and the jitter that was finally applied (zero if none).
pub fn cholesky_with_jitter<T: Real, const D: usize>(
    m: &SMatrix<T, D, D>,
) -> Option<(SMatrix<T, D, D>, T)> {
    let sym = symmetrize(m);
    if let Some(c) = Cholesky::new(sym) {
        return Some((c.l(), T::zero()));
    }
    let scale = sym.diagonal().amax().max(T::one());
    let mut jitter = lit::<T>(1e-12);
    let max_jitter = lit::<T>(1e-6);
    while jitter <= max_jitter * lit(1.0 + 1e-9) {
        let shifted = sym + SMatrix::<T, D, D>::identity() * (jitter * scale);
        if let Some(c) = Cholesky::new(shifted) {
            return Some((c.l(), jitter * scale));
        }
        jitter *= lit(10.0);
    }
    None
}

/// Mahalanobis term `rᵀ M⁻¹ r` and determinant of a symmetric positive
/// definite matrix, with the same jitter escalation as
/// [`cholesky_with_jitter`]. The quadratic form goes through a triangular
/// solve, so it stays accurate for badly conditioned matrices.
pub fn mahalanobis_det<T: Real, const D: usize>(
    m: &SMatrix<T, D, D>,
    r: &SVector<T, D>,
) -> Option<(T, T)> {
    let (l, _) = cholesky_with_jitter(m)?;
    let det_sqrt = l.diagonal().iter().fold(T::one(), |acc, &d| acc * d);
    let w = l.solve_lower_triangular(r)?;
    Some((w.norm_squared(), det_sqrt * det_sqrt))
}
