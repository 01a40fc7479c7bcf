//! Dense Hermitian eigen-solves backed by `nalgebra`.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex;

use crate::error::{MrfaError, Result};
use crate::scalar::{lit, Real};

pub type CMatrix<T> = DMatrix<Complex<T>>;

/// Leading eigenpair of a Hermitian matrix.
#[derive(Debug, Clone)]
pub struct EigenPair<T: Real> {
    /// Algebraically largest eigenvalue.
    pub value: T,
    /// Unit-norm eigenvector; its global phase is arbitrary.
    pub vector: Vec<Complex<T>>,
    /// Difference between the two largest eigenvalues.
    pub gap: T,
    /// Set when `gap < 1e-10 · ‖M‖_F`.
    pub degenerate: bool,
}

pub fn frobenius<T: Real>(m: &CMatrix<T>) -> T {
    m.iter().fold(T::zero(), |acc, z| acc + z.norm_sqr()).sqrt()
}

/// `max_{i,j} |M[i,j] - conj(M[j,i])|`.
pub fn hermitian_asymmetry<T: Real>(m: &CMatrix<T>) -> T {
    let n = m.nrows();
    let mut worst = T::zero();
    for i in 0..n {
        for j in i..n {
            let d = (m[(i, j)] - m[(j, i)].conj()).norm_sqr().sqrt();
            if d > worst {
                worst = d;
            }
        }
    }
    worst
}

/// `(M + M*) / 2`.
pub fn hermitian_part<T: Real>(m: &CMatrix<T>) -> CMatrix<T> {
    let half = lit::<T>(0.5);
    let mut h = m.clone();
    let n = m.nrows();
    for i in 0..n {
        for j in 0..n {
            h[(i, j)] = (m[(i, j)] + m[(j, i)].conj()) * half;
        }
    }
    h
}

fn tolerance<T: Real>(rel: f64) -> T {
    let eps = T::default_epsilon() * lit(64.0);
    let rel = lit::<T>(rel);
    if rel > eps {
        rel
    } else {
        eps
    }
}

/// Full eigendecomposition of a Hermitian matrix, eigenvalues descending.
///
/// Only the Hermitian part of `m` is used.
pub fn hermitian_eigen<T: Real>(m: &CMatrix<T>) -> Result<(Vec<T>, CMatrix<T>)> {
    let n = m.nrows();
    if n != m.ncols() {
        return Err(MrfaError::InvalidParameter("matrix must be square".into()));
    }
    let eig = SymmetricEigen::try_new(hermitian_part(m), T::default_epsilon(), 100_000).ok_or(MrfaError::EigenFailure)?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap_or(std::cmp::Ordering::Equal));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = CMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    Ok((values, vectors))
}

/// Eigenpair of the algebraically largest eigenvalue.
///
/// Fails when `m` is not Hermitian within `1e-8 · max(1, ‖m‖_F)`.
pub fn leading_eigenpair<T: Real>(m: &CMatrix<T>) -> Result<EigenPair<T>> {
    let scale = frobenius(m);
    let unit = if scale > T::one() { scale } else { T::one() };
    let asym = hermitian_asymmetry(m);
    if asym > tolerance::<T>(1e-8) * unit {
        return Err(MrfaError::NotHermitian(crate::scalar::to_f64(asym)));
    }
    leading_eigenpair_unchecked(m)
}

/// Like [`leading_eigenpair`] but silently uses the Hermitian part.
pub fn leading_eigenpair_unchecked<T: Real>(m: &CMatrix<T>) -> Result<EigenPair<T>> {
    let (values, vectors) = hermitian_eigen(m)?;
    let n = values.len();
    if n == 0 {
        return Err(MrfaError::InvalidParameter("empty matrix".into()));
    }
    let gap = if n > 1 { values[0] - values[1] } else { T::max_value().unwrap_or_else(T::one) };
    let degenerate = n > 1 && gap < tolerance::<T>(1e-10) * frobenius(m);
    Ok(EigenPair { value: values[0], vector: vectors.column(0).iter().copied().collect(), gap, degenerate })
}

/// `v v*`.
pub fn outer<T: Real>(v: &[Complex<T>]) -> CMatrix<T> {
    let n = v.len();
    CMatrix::from_fn(n, n, |i, j| v[i] * v[j].conj())
}
