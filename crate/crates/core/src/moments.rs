//! Shift-invariant moments of the observations.
//!
//! A cyclic shift multiplies `ŷ[k]` by `ω^{sk}`, so any product of Fourier
//! coefficients whose frequencies cancel modulo `L` is shift invariant. The
//! first and third moments vanish under the model (the factor `a` enters
//! with an odd power); the trispectrum is the lowest informative order.

use std::io::Write;

use num_complex::Complex;
use rand::Rng;

use crate::error::{MrfaError, Result};
use crate::linalg::CMatrix;
use crate::model::ObservationBatch;
use crate::scalar::{czero, lit, to_f64, Real};
use crate::spectral::{mean_power, raw_stride_covariance, tree_reduce};

/// Largest `L` accepted by [`trispectrum_estimate`] without `force`.
pub const TRISPECTRUM_MAX_L: usize = 64;

fn mean_over<T: Real>(batch: &ObservationBatch<T>, len: usize, f: impl Fn(&[Complex<T>], &mut [Complex<T>])) -> Vec<Complex<T>> {
    let n = batch.n();
    let sum = tree_reduce(
        n,
        |range| {
            let mut acc = vec![czero::<T>(); len];
            for i in range {
                f(batch.fourier_row(i), &mut acc);
            }
            acc
        },
        |a, b| a.iter_mut().zip(b).for_each(|(x, y)| *x += y),
    )
    .unwrap_or_else(|| vec![czero(); len]);
    let inv_n = T::one() / lit::<T>(n as f64);
    sum.into_iter().map(|z| z.scale(inv_n)).collect()
}

/// `M₁[k] = (1/N) Σ ŷ_i[k]`.
pub fn empirical_mean<T: Real>(batch: &ObservationBatch<T>) -> Vec<Complex<T>> {
    mean_over(batch, batch.signal_len(), |y, acc| acc.iter_mut().zip(y).for_each(|(a, z)| *a += z))
}

/// `p_y[k] = (1/N) Σ |ŷ_i[k]|²`.
pub fn power_spectrum_y<T: Real>(batch: &ObservationBatch<T>) -> Vec<T> {
    mean_power(batch)
}

fn bispectrum_term<T: Real>(y: &[Complex<T>], k1: usize, k2: usize) -> Complex<T> {
    let l = y.len();
    y[k1] * y[k2].conj() * y[(k2 + l - k1) % l]
}

/// `B̃[k₁, k₂] = (1/N) Σ ŷ[k₁] conj(ŷ[k₂]) ŷ[k₂ - k₁]`.
pub fn bispectrum_estimate<T: Real>(batch: &ObservationBatch<T>) -> CMatrix<T> {
    let l = batch.signal_len();
    let flat = mean_over(batch, l * l, |y, acc| {
        for k1 in 0..l {
            for k2 in 0..l {
                acc[k1 * l + k2] += bispectrum_term(y, k1, k2);
            }
        }
    });
    CMatrix::from_fn(l, l, |i, j| flat[i * l + j])
}

/// Bispectrum with per-entry standard errors `√(Var / N)`.
#[derive(Debug, Clone)]
pub struct BispectrumWithErrors<T: Real> {
    pub mean: CMatrix<T>,
    pub standard_error: nalgebra::DMatrix<T>,
}

pub fn bispectrum_with_errors<T: Real>(batch: &ObservationBatch<T>) -> BispectrumWithErrors<T> {
    let l = batch.signal_len();
    let mean = bispectrum_estimate(batch);
    let second = mean_over(batch, l * l, |y, acc| {
        for k1 in 0..l {
            for k2 in 0..l {
                acc[k1 * l + k2].re += bispectrum_term(y, k1, k2).norm_sqr();
            }
        }
    });
    let n = lit::<T>(batch.n() as f64);
    let standard_error = nalgebra::DMatrix::from_fn(l, l, |i, j| {
        let var = (second[i * l + j].re - mean[(i, j)].norm_sqr()).max(T::zero());
        (var / n).sqrt()
    });
    BispectrumWithErrors { mean, standard_error }
}

/// `T̃[k₁, k₂, k₃] = (1/N) Σ ŷ[k₁] conj(ŷ[k₂]) ŷ[k₃] conj(ŷ[k₁ - k₂ + k₃])`.
#[derive(Debug, Clone)]
pub struct TrispectrumEstimate<T: Real> {
    pub l: usize,
    values: Vec<Complex<T>>,
    pub sample_count: usize,
}

impl<T: Real> TrispectrumEstimate<T> {
    pub fn get(&self, k1: usize, k2: usize, k3: usize) -> Complex<T> {
        let l = self.l;
        self.values[((k1 % l) * l + k2 % l) * l + k3 % l]
    }

    /// Flat `L³` buffer, `k₃` fastest.
    pub fn values(&self) -> &[Complex<T>] {
        &self.values
    }
}

/// Rejects `L > 64` unless `force` is set (storage is `L³`).
pub fn trispectrum_estimate<T: Real>(batch: &ObservationBatch<T>, force: bool) -> Result<TrispectrumEstimate<T>> {
    let l = batch.signal_len();
    if l > TRISPECTRUM_MAX_L && !force {
        return Err(MrfaError::TrispectrumTooLarge(l));
    }
    let values = mean_over(batch, l * l * l, |y, acc| {
        for k1 in 0..l {
            for k2 in 0..l {
                let a = y[k1] * y[k2].conj();
                let base = (k1 * l + k2) * l;
                for k3 in 0..l {
                    acc[base + k3] += a * y[k3] * y[(k1 + k3 + l - k2) % l].conj();
                }
            }
        }
    });
    Ok(TrispectrumEstimate { l, values, sample_count: batch.n() })
}

/// Largest `|C̃_z^(m)[k₁, k₂] - T̃[k₁, k₁+m, k₂+m]|` over all entries, with
/// `C̃_z^(m)` the raw (uncorrected) stride covariance.
pub fn cz_trispectrum_identity_check<T: Real>(batch: &ObservationBatch<T>, m: usize) -> Result<T> {
    let l = batch.signal_len();
    if m == 0 || m >= l {
        return Err(MrfaError::InvalidParameter(format!("stride m = {m} outside 1..{l}")));
    }
    let cz = raw_stride_covariance(batch, m);
    let t = trispectrum_estimate(batch, false)?;
    let mut worst = T::zero();
    for k1 in 0..l {
        for k2 in 0..l {
            worst = worst.max((cz[(k1, k2)] - t.get(k1, k1 + m, k2 + m)).norm_sqr().sqrt());
        }
    }
    Ok(worst)
}

/// One sampled entry of the empirical fourth moment off its support.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OffSupportEntry {
    pub index: [usize; 4],
    pub mean: Complex<f64>,
    pub standard_error: f64,
}

/// Samples `count` index tuples with `k₁ - k₂ + k₃ - k₄ ≢ 0 (mod L)` and
/// estimates `M₄ = E[ŷ[k₁] conj(ŷ[k₂]) ŷ[k₃] conj(ŷ[k₄])]` there.
pub fn fourth_moment_off_support<T: Real, R: Rng + ?Sized>(batch: &ObservationBatch<T>, count: usize, rng: &mut R) -> Vec<OffSupportEntry> {
    let l = batch.signal_len();
    let n = batch.n() as f64;
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let k: [usize; 4] = std::array::from_fn(|_| rng.random_range(0..l));
        if (k[0] + k[2] + 2 * l - k[1] - k[3]) % l == 0 {
            continue;
        }
        let mut sum = Complex::<f64>::new(0.0, 0.0);
        let mut sq = 0.0;
        for y in batch.fourier_rows() {
            let v = y[k[0]] * y[k[1]].conj() * y[k[2]] * y[k[3]].conj();
            let v = Complex::new(to_f64(v.re), to_f64(v.im));
            sum += v;
            sq += v.norm_sqr();
        }
        let mean = sum / n;
        let var = (sq / n - mean.norm_sqr()).max(0.0);
        out.push(OffSupportEntry { index: k, mean, standard_error: (var / n).sqrt() });
    }
    out
}

/// Writes `k1,k2,k3,re,im` rows.
pub fn write_trispectrum_csv<T: Real, W: Write>(t: &TrispectrumEstimate<T>, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["k1", "k2", "k3", "re", "im"])?;
    let l = t.l;
    for k1 in 0..l {
        for k2 in 0..l {
            for k3 in 0..l {
                let z = t.get(k1, k2, k3);
                w.write_record([
                    k1.to_string(),
                    k2.to_string(),
                    k3.to_string(),
                    format!("{:e}", to_f64(z.re)),
                    format!("{:e}", to_f64(z.im)),
                ])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}
