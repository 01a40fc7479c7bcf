//! Second- and fourth-order shift-invariant estimators.
//!
//! The power spectrum yields `λ` and the Fourier magnitudes of `θ`. The
//! stride-`m` products `z^(m)[k] = ŷ[k] conj(ŷ[k+m])` have covariance
//! `E|a|⁴ u^(m) u^(m)* + Σ_ε^(m)` where `u^(m)[k] = θ̂[k] conj(θ̂[k+m])`
//! and `Σ_ε^(m)` is diagonal, so after removing the diagonal noise bias the
//! leading eigenvector of the sample covariance estimates `u^(m)` up to a
//! phase.

use std::ops::Range;

use num_complex::Complex;

use crate::error::{Flag, MrfaError, Result};
use crate::linalg::{leading_eigenpair, CMatrix};
use crate::model::{ObservationBatch, Signal};
use crate::scalar::{arg, cis, creal, czero, lit, modulus, wrap_two_pi, Real};

/// Entries with modulus below this have no usable phase.
pub const PHASE_EPS: f64 = 1e-14;

fn chunk_len(n: usize) -> usize {
    (n.div_ceil(64)).max(256)
}

/// Sums per-chunk partials over `0..n` along a fixed binary tree.
///
/// Chunk boundaries depend only on `n`, and partials are merged like a
/// binary counter (left operand always the earlier range), so the floating
/// point result is a pure function of the inputs.
pub(crate) fn tree_reduce<A, F, M>(n: usize, mut fold_chunk: F, mut merge: M) -> Option<A>
where
    F: FnMut(Range<usize>) -> A,
    M: FnMut(&mut A, A),
{
    let c = chunk_len(n);
    let mut stack: Vec<(A, u32)> = Vec::new();
    let mut start = 0;
    while start < n {
        let end = (start + c).min(n);
        let mut acc = fold_chunk(start..end);
        let mut level = 0;
        while stack.last().is_some_and(|(_, l)| *l == level) {
            let (mut left, _) = stack.pop().expect("nonempty");
            merge(&mut left, acc);
            acc = left;
            level += 1;
        }
        stack.push((acc, level));
        start = end;
    }
    let mut acc = stack.pop()?.0;
    while let Some((mut left, _)) = stack.pop() {
        merge(&mut left, acc);
        acc = left;
    }
    Some(acc)
}

fn add_into<T: Real>(dst: &mut Vec<Complex<T>>, src: Vec<Complex<T>>) {
    dst.iter_mut().zip(src).for_each(|(d, s)| *d += s);
}

/// `p̃_x` and `λ̃`.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerSpectrumEstimate<T: Real> {
    /// `(1/N) Σ |ŷ_i[k]|² - σ²`; negative bins are kept.
    pub p_tilde: Vec<T>,
    /// `Σ_k |p̃_x[k]|`.
    pub lambda_tilde: T,
}

impl<T: Real> PowerSpectrumEstimate<T> {
    pub fn from_p_tilde(p_tilde: Vec<T>) -> Self {
        let lambda_tilde = p_tilde.iter().fold(T::zero(), |acc, p| acc + p.abs());
        PowerSpectrumEstimate { p_tilde, lambda_tilde }
    }
}

/// `(1/N) Σ_i |ŷ_i[k]|²`.
pub fn mean_power<T: Real>(batch: &ObservationBatch<T>) -> Vec<T> {
    let l = batch.signal_len();
    let n = batch.n();
    let sum = tree_reduce(
        n,
        |range| {
            let mut acc = vec![T::zero(); l];
            for i in range {
                for (a, z) in acc.iter_mut().zip(batch.fourier_row(i)) {
                    *a += z.norm_sqr();
                }
            }
            acc
        },
        |left, right| left.iter_mut().zip(right).for_each(|(a, b)| *a += b),
    )
    .unwrap_or_else(|| vec![T::zero(); l]);
    let inv_n = T::one() / lit::<T>(n as f64);
    sum.into_iter().map(|s| s * inv_n).collect()
}

pub fn power_spectrum_estimate<T: Real>(batch: &ObservationBatch<T>, sigma2: T) -> PowerSpectrumEstimate<T> {
    PowerSpectrumEstimate::from_p_tilde(mean_power(batch).into_iter().map(|p| p - sigma2).collect())
}

/// `z^(m)[k] = ŷ[k] conj(ŷ[(k+m) mod L])`.
pub fn stride_products<T: Real>(y_hat: &[Complex<T>], m: usize) -> Vec<Complex<T>> {
    let l = y_hat.len();
    (0..l).map(|k| y_hat[k] * y_hat[(k + m) % l].conj()).collect()
}

/// Bias-corrected sample covariance of `z^(m)`.
#[derive(Debug, Clone)]
pub struct StrideCovariance<T: Real> {
    pub m: usize,
    /// `C̃_z^(m)` with the noise bias removed from its diagonal.
    pub matrix: CMatrix<T>,
    /// Diagonal of the raw sample covariance, before bias correction.
    pub raw_diagonal: Vec<T>,
}

/// `(1/N) Σ_i z_i^(m) z_i^(m)*`, without bias correction.
pub fn raw_stride_covariance<T: Real>(batch: &ObservationBatch<T>, m: usize) -> CMatrix<T> {
    let l = batch.signal_len();
    let n = batch.n();
    let upper = tree_reduce(
        n,
        |range| {
            let mut acc = vec![czero::<T>(); l * l];
            let mut z = vec![czero::<T>(); l];
            for i in range {
                let y = batch.fourier_row(i);
                for k in 0..l {
                    z[k] = y[k] * y[(k + m) % l].conj();
                }
                for k1 in 0..l {
                    let a = z[k1];
                    let row = &mut acc[k1 * l..(k1 + 1) * l];
                    for k2 in k1..l {
                        row[k2] += a * z[k2].conj();
                    }
                }
            }
            acc
        },
        add_into,
    )
    .unwrap_or_else(|| vec![czero(); l * l]);
    let inv_n = T::one() / lit::<T>(n as f64);
    CMatrix::from_fn(l, l, |i, j| if i <= j { upper[i * l + j] * inv_n } else { upper[j * l + i].conj() * inv_n })
}

/// Removes `σ²(p̃[k] + p̃[k+m]) + σ⁴` from the diagonal of `matrix`.
pub fn correct_bias<T: Real>(matrix: &mut CMatrix<T>, m: usize, p_tilde: &[T], sigma2: T) {
    let l = matrix.nrows();
    for k in 0..l {
        let bias = sigma2 * (p_tilde[k] + p_tilde[(k + m) % l]) + sigma2 * sigma2;
        matrix[(k, k)] -= creal(bias);
    }
}

pub fn stride_covariance<T: Real>(
    batch: &ObservationBatch<T>,
    m: usize,
    p_est: &PowerSpectrumEstimate<T>,
    sigma2: T,
) -> Result<StrideCovariance<T>> {
    let l = batch.signal_len();
    if m == 0 || m >= l {
        return Err(MrfaError::InvalidParameter(format!("stride m = {m} outside 1..{l}")));
    }
    if p_est.p_tilde.len() != l {
        return Err(MrfaError::LengthMismatch { expected: l, actual: p_est.p_tilde.len() });
    }
    let mut matrix = raw_stride_covariance(batch, m);
    let raw_diagonal = (0..l).map(|k| matrix[(k, k)].re).collect();
    correct_bias(&mut matrix, m, &p_est.p_tilde, sigma2);
    Ok(StrideCovariance { m, matrix, raw_diagonal })
}

/// Phase-normalized leading eigenvector of a stride covariance.
#[derive(Debug, Clone)]
pub struct UEstimate<T: Real> {
    pub m: usize,
    /// Unit norm, `Σ_k arg ũ[k] ≡ 0 (mod 2π)`, `arg ũ[0] ∈ [0, 2π/L)`.
    pub u_tilde: Vec<Complex<T>>,
    pub top_eigenvalue: T,
    pub spectral_gap: T,
    pub degenerate_gap: bool,
}

impl<T: Real> UEstimate<T> {
    pub fn flags(&self) -> Vec<Flag> {
        if self.degenerate_gap {
            vec![Flag::DegenerateGap { m: self.m }]
        } else {
            Vec::new()
        }
    }
}

/// Fixes the phase ambiguity of an eigenvector estimate of `u^(m)`.
///
/// First rotates so that the principal arguments sum to `0 (mod 2π)`, which
/// leaves an `L`-th root of unity undetermined; then applies the root that
/// makes `arg ũ[0]`, taken in `[0, 2π)`, smallest.
pub fn normalize_u_phases<T: Real>(u: &[Complex<T>]) -> Result<Vec<Complex<T>>> {
    let l = u.len();
    if l == 0 {
        return Err(MrfaError::InvalidParameter("empty vector".into()));
    }
    let eps = lit::<T>(PHASE_EPS);
    if let Some((index, z)) = u.iter().enumerate().find(|(_, z)| !(modulus(**z) >= eps)) {
        return Err(MrfaError::DegeneratePhase { index, modulus: crate::scalar::to_f64(modulus(*z)) });
    }
    let lf = lit::<T>(l as f64);
    let total = u.iter().fold(T::zero(), |acc, z| acc + arg(*z));
    let first = cis(-total / lf);
    let rotated: Vec<Complex<T>> = u.iter().map(|z| z * first).collect();
    let a0 = wrap_two_pi(arg(rotated[0]));
    let step = T::two_pi() / lf;
    let mut best_j = 0usize;
    let mut best = a0;
    for j in 1..l {
        let cand = wrap_two_pi(a0 + step * lit::<T>(j as f64));
        if cand < best {
            best = cand;
            best_j = j;
        }
    }
    let root = cis(step * lit::<T>(best_j as f64));
    Ok(rotated.into_iter().map(|z| z * root).collect())
}

/// Normalizes and wraps an eigenvector into a [`UEstimate`].
pub fn u_estimate_from_eigenvector<T: Real>(
    m: usize,
    vector: &[Complex<T>],
    top_eigenvalue: T,
    spectral_gap: T,
    degenerate_gap: bool,
) -> Result<UEstimate<T>> {
    Ok(UEstimate { m, u_tilde: normalize_u_phases(vector)?, top_eigenvalue, spectral_gap, degenerate_gap })
}

/// Stride covariance, leading eigenvector, phase normalization.
pub fn estimate_u<T: Real>(batch: &ObservationBatch<T>, m: usize, p_est: &PowerSpectrumEstimate<T>, sigma2: T) -> Result<UEstimate<T>> {
    let cov = stride_covariance(batch, m, p_est, sigma2)?;
    let pair = leading_eigenpair(&cov.matrix)?;
    u_estimate_from_eigenvector(m, &pair.vector, pair.value, pair.gap, pair.degenerate)
}

/// [`estimate_u`] for every `m = 1..L-1`.
pub fn estimate_u_family<T: Real>(batch: &ObservationBatch<T>, p_est: &PowerSpectrumEstimate<T>, sigma2: T) -> Result<Vec<UEstimate<T>>> {
    (1..batch.signal_len()).map(|m| estimate_u(batch, m, p_est, sigma2)).collect()
}

/// `u^(m)[k] = θ̂[k] conj(θ̂[k+m])`.
pub fn exact_u<T: Real>(theta_hat: &[Complex<T>], m: usize) -> Vec<Complex<T>> {
    stride_products(theta_hat, m)
}

/// Population covariance of `z^(m)`:
/// `E|a|⁴ u^(m) u^(m)* + diag(σ²(p_x[k] + p_x[k+m]) + σ⁴)` with
/// `p_x = λ |θ̂|²`. Pass `fourth_moment = 2λ²` for `a ~ CN(0, λ)`.
pub fn population_covariance<T: Real>(theta: &Signal<T>, lambda: T, sigma2: T, m: usize, fourth_moment: T) -> Result<CMatrix<T>> {
    let l = theta.len();
    if m == 0 || m >= l {
        return Err(MrfaError::InvalidParameter(format!("stride m = {m} outside 1..{l}")));
    }
    let hat = theta.fourier();
    let u = exact_u(&hat, m);
    let p_x: Vec<T> = hat.iter().map(|z| lambda * z.norm_sqr()).collect();
    Ok(CMatrix::from_fn(l, l, |i, j| {
        let signal = u[i] * u[j].conj() * fourth_moment;
        if i == j {
            signal + creal(sigma2 * (p_x[i] + p_x[(i + m) % l]) + sigma2 * sigma2)
        } else {
            signal
        }
    }))
}

/// `γ_m = L ‖u^(m)‖²` and `δ_m = min_k |u^(m)[k]|`, indexed by `m ∈ 0..L`.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalDiagnostics<T: Real> {
    pub gamma: Vec<T>,
    pub delta: Vec<T>,
}

pub fn signal_diagnostics<T: Real>(theta: &Signal<T>) -> SignalDiagnostics<T> {
    let hat = theta.fourier();
    let l = hat.len();
    let lf = lit::<T>(l as f64);
    let (gamma, delta) = (0..l)
        .map(|m| {
            let u = exact_u(&hat, m);
            let sq = u.iter().fold(T::zero(), |acc, z| acc + z.norm_sqr());
            let min = u.iter().map(|z| modulus(*z)).fold(T::max_value().unwrap_or_else(T::one), |a, b| a.min(b));
            (lf * sq, min)
        })
        .unzip();
    SignalDiagnostics { gamma, delta }
}
