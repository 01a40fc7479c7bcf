//! Signal recovery from the spectral estimates.
//!
//! Both algorithms estimate Fourier magnitudes from the power spectrum and
//! differ in how they recover Fourier phases:
//!
//! * frequency marching (FM) telescopes the phase differences in `ũ^(1)`;
//! * alternating minimization (AM) fits `q q* ⊙ Circ(α)` to the phase
//!   matrix `C̃_x` assembled from every `ũ^(m)`.
//!
//! `Circ(α)[k₁, k₂] = α[(k₂ - k₁) mod L]` throughout.

use num_complex::Complex;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Flag, MrfaError, Result};
use crate::linalg::{hermitian_part, leading_eigenpair_unchecked, CMatrix};
use crate::model::{idft, ObservationBatch};
use crate::rng::rng_from_seed;
use crate::scalar::{arg, cis, cone, czero, lit, modulus, Real};
use crate::spectral::{estimate_u, estimate_u_family, power_spectrum_estimate, PowerSpectrumEstimate, UEstimate, PHASE_EPS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Algorithm {
    #[serde(rename = "FM")]
    Fm,
    #[serde(rename = "AM")]
    Am,
    #[serde(rename = "EM")]
    Em,
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Algorithm::Fm => "FM",
            Algorithm::Am => "AM",
            Algorithm::Em => "EM",
        })
    }
}

#[derive(Debug, Clone)]
pub struct RecoveryResult<T: Real> {
    /// Unit-norm time-domain estimate `θ̃`.
    pub theta_tilde: Vec<Complex<T>>,
    pub lambda_tilde: T,
    pub algorithm: Algorithm,
    pub iterations: usize,
    /// Objective after each full iteration (AM), log-likelihood (EM).
    pub objective_trace: Vec<T>,
    pub flags: Vec<Flag>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AmConfig {
    /// `τ`, at least 1.
    pub max_iterations: usize,
    /// Stop once the relative decrease of the objective drops below this.
    pub relative_tolerance: f64,
    /// Seed for the random initial `α₀`.
    pub init_seed: u64,
}

impl Default for AmConfig {
    fn default() -> Self {
        AmConfig { max_iterations: 100, relative_tolerance: 1e-8, init_seed: 0 }
    }
}

impl AmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(MrfaError::InvalidParameter("max_iterations must be at least 1".into()));
        }
        if !(self.relative_tolerance >= 0.0) {
            return Err(MrfaError::InvalidParameter("relative_tolerance must be nonnegative".into()));
        }
        Ok(())
    }
}

/// `θ̃_m[k] = √(|p̃_x[k]| / λ̃)`.
pub fn magnitude_estimate<T: Real>(p_est: &PowerSpectrumEstimate<T>) -> Result<Vec<T>> {
    if !(p_est.lambda_tilde > T::zero()) {
        return Err(MrfaError::AllZeroSpectrum);
    }
    Ok(p_est.p_tilde.iter().map(|p| (p.abs() / p_est.lambda_tilde).sqrt()).collect())
}

/// Unit-modulus phases with `θ̃_p[0] = 1` and
/// `θ̃_p[k+1] = θ̃_p[k] exp(-i arg u[k])`.
pub fn frequency_march_phases<T: Real>(u: &[Complex<T>]) -> Result<Vec<Complex<T>>> {
    let l = u.len();
    let eps = lit::<T>(PHASE_EPS);
    if let Some(index) = u.iter().take(l.saturating_sub(1)).position(|z| !(modulus(*z) >= eps)) {
        return Err(MrfaError::DegeneratePhase { index, modulus: crate::scalar::to_f64(modulus(u[index])) });
    }
    let mut out = Vec::with_capacity(l);
    let mut cur = cone::<T>();
    out.push(cur);
    for z in u.iter().take(l.saturating_sub(1)) {
        cur *= cis(-arg(*z));
        out.push(cur);
    }
    Ok(out)
}

pub fn frequency_march<T: Real>(u_est: &UEstimate<T>) -> Result<Vec<Complex<T>>> {
    if u_est.m != 1 {
        return Err(MrfaError::InvalidParameter(format!("frequency marching needs m = 1, got {}", u_est.m)));
    }
    frequency_march_phases(&u_est.u_tilde)
}

/// `θ̃ = F*(θ̃_p ⊙ θ̃_m)`, renormalized against rounding.
pub fn combine<T: Real>(phases: &[Complex<T>], magnitudes: &[T]) -> Result<Vec<Complex<T>>> {
    if phases.len() != magnitudes.len() {
        return Err(MrfaError::LengthMismatch { expected: magnitudes.len(), actual: phases.len() });
    }
    let hat: Vec<Complex<T>> = phases.iter().zip(magnitudes).map(|(p, m)| p.scale(*m)).collect();
    let theta = idft(&hat);
    let n = crate::scalar::norm(&theta);
    if !(n > T::zero()) {
        return Err(MrfaError::AllZeroSpectrum);
    }
    Ok(theta.into_iter().map(|z| z.unscale(n)).collect())
}

pub fn recover_fm<T: Real>(batch: &ObservationBatch<T>, sigma2: T) -> Result<RecoveryResult<T>> {
    let p_est = power_spectrum_estimate(batch, sigma2);
    let u1 = estimate_u(batch, 1, &p_est, sigma2)?;
    let magnitudes = magnitude_estimate(&p_est)?;
    let phases = frequency_march(&u1)?;
    Ok(RecoveryResult {
        theta_tilde: combine(&phases, &magnitudes)?,
        lambda_tilde: p_est.lambda_tilde,
        algorithm: Algorithm::Fm,
        iterations: 1,
        objective_trace: Vec::new(),
        flags: u1.flags(),
    })
}

fn check_family<T: Real>(family: &[UEstimate<T>]) -> Result<usize> {
    let l = family.len() + 1;
    for (i, est) in family.iter().enumerate() {
        if est.m != i + 1 {
            return Err(MrfaError::InvalidParameter(format!("family entry {i} has m = {}", est.m)));
        }
        if est.u_tilde.len() != l {
            return Err(MrfaError::LengthMismatch { expected: l, actual: est.u_tilde.len() });
        }
    }
    Ok(l)
}

/// Phase matrix `C̃_x[k₁, k₂] = phase of ũ^((k₂-k₁) mod L)[k₁]`, ones on the
/// diagonal. `family[i]` must hold `m = i + 1`.
///
/// The phase ambiguities of `ũ^(m)` and `ũ^(L-m)` are resolved
/// independently, so the result is not Hermitian in general; only
/// `C̃_x ⊙ conj(C̃_xᵀ)` is guaranteed to be circulant.
pub fn build_cx<T: Real>(family: &[UEstimate<T>]) -> Result<CMatrix<T>> {
    let (cx, flags) = build_cx_permissive(family)?;
    match flags.first() {
        Some(Flag::CxZeroEntry { m, k }) => {
            Err(MrfaError::DegeneratePhase { index: *k, modulus: crate::scalar::to_f64(modulus(family[m - 1].u_tilde[*k])) })
        }
        _ => Ok(cx),
    }
}

/// As [`build_cx`], but zero entries become `1` and are reported as flags.
pub fn build_cx_permissive<T: Real>(family: &[UEstimate<T>]) -> Result<(CMatrix<T>, Vec<Flag>)> {
    let l = check_family(family)?;
    let eps = lit::<T>(PHASE_EPS);
    let mut flags = Vec::new();
    let mut cx = CMatrix::from_element(l, l, cone::<T>());
    for k1 in 0..l {
        for k2 in 0..l {
            if k1 == k2 {
                continue;
            }
            let m = (k2 + l - k1) % l;
            let z = family[m - 1].u_tilde[k1];
            let r = modulus(z);
            if r >= eps {
                cx[(k1, k2)] = z.unscale(r);
            } else {
                flags.push(Flag::CxZeroEntry { m, k: k1 });
            }
        }
    }
    Ok((cx, flags))
}

/// `Circ(α) ⊙ matrix`.
fn hadamard_circ<T: Real>(matrix: &CMatrix<T>, alpha: &[Complex<T>]) -> CMatrix<T> {
    let l = alpha.len();
    CMatrix::from_fn(l, l, |i, j| matrix[(i, j)] * alpha[(j + l - i) % l])
}

/// Exact minimizer over `q` of `‖q q* ⊙ Circ(α) - C̃_x‖_F`.
///
/// With `M = C̃_x ⊙ Circ(α*)` the objective equals `‖q q* - M‖_F`, which is
/// minimized by `q = √max(μ, 0) v` for the algebraically largest eigenpair
/// `(μ, v)` of the Hermitian part of `M`.
pub fn am_q_step<T: Real>(cx: &CMatrix<T>, alpha: &[Complex<T>]) -> Result<(Vec<Complex<T>>, bool)> {
    let conj: Vec<Complex<T>> = alpha.iter().map(|a| a.conj()).collect();
    let h = hermitian_part(&hadamard_circ(cx, &conj));
    let pair = leading_eigenpair_unchecked(&h)?;
    let s = pair.value.max(T::zero()).sqrt();
    Ok((pair.vector.into_iter().map(|z| z.scale(s)).collect(), pair.degenerate))
}

/// Exact minimizer over unit-modulus `α` of `‖q q* ⊙ Circ(α) - C̃_x‖_F`.
/// Returns the indices `k` whose defining sum vanished (set to `α[k] = 1`).
pub fn am_alpha_step<T: Real>(cx: &CMatrix<T>, q: &[Complex<T>]) -> (Vec<Complex<T>>, Vec<usize>) {
    let l = q.len();
    let mut zero = Vec::new();
    let alpha = (0..l)
        .map(|k| {
            let s = (0..l).fold(czero::<T>(), |acc, i| {
                let j = (i + k) % l;
                acc + q[i].conj() * q[j] * cx[(i, j)]
            });
            let r = modulus(s);
            if r > T::zero() {
                s.unscale(r)
            } else {
                zero.push(k);
                cone()
            }
        })
        .collect();
    (alpha, zero)
}

/// `‖q q* ⊙ Circ(α) - C̃_x‖_F`.
pub fn am_objective<T: Real>(cx: &CMatrix<T>, q: &[Complex<T>], alpha: &[Complex<T>]) -> T {
    let l = q.len();
    let mut acc = T::zero();
    for i in 0..l {
        for j in 0..l {
            acc += (q[i] * q[j].conj() * alpha[(j + l - i) % l] - cx[(i, j)]).norm_sqr();
        }
    }
    acc.sqrt()
}

#[derive(Debug, Clone)]
pub struct AmOutcome<T: Real> {
    pub q: Vec<Complex<T>>,
    pub alpha: Vec<Complex<T>>,
    pub iterations: usize,
    pub objective_trace: Vec<T>,
    pub flags: Vec<Flag>,
}

/// Random unit-modulus `α₀` with `α₀[0] = 1` (the diagonal of `C̃_x`).
pub fn random_alpha<T: Real>(l: usize, seed: u64) -> Vec<Complex<T>> {
    let mut rng = rng_from_seed(seed);
    (0..l)
        .map(|k| {
            let phi: f64 = rng.random::<f64>() * std::f64::consts::TAU;
            if k == 0 {
                cone()
            } else {
                cis(lit::<T>(phi))
            }
        })
        .collect()
}

/// Alternates q- and α-steps from `alpha0` on an arbitrary `C̃_x`.
pub fn alternating_minimization<T: Real>(cx: &CMatrix<T>, alpha0: Vec<Complex<T>>, config: &AmConfig) -> Result<AmOutcome<T>> {
    config.validate()?;
    let l = cx.nrows();
    if cx.ncols() != l || alpha0.len() != l {
        return Err(MrfaError::LengthMismatch { expected: l, actual: alpha0.len() });
    }
    let tol = lit::<T>(config.relative_tolerance);
    let mut alpha = alpha0;
    let mut q = vec![czero::<T>(); l];
    let mut trace: Vec<T> = Vec::new();
    let mut flags = Vec::new();
    for it in 0..config.max_iterations {
        let (q_new, degenerate) = am_q_step(cx, &alpha)?;
        if degenerate {
            flags.push(Flag::DegenerateQGap { iteration: it + 1 });
        }
        q = q_new;
        let (alpha_new, zero) = am_alpha_step(cx, &q);
        flags.extend(zero.into_iter().map(|k| Flag::AlphaZeroSum { k }));
        alpha = alpha_new;
        let obj = am_objective(cx, &q, &alpha);
        let stop = match trace.last() {
            Some(&prev) => prev <= T::zero() || (prev - obj) / prev < tol,
            None => false,
        };
        trace.push(obj);
        if stop {
            break;
        }
    }
    flags.dedup();
    Ok(AmOutcome { q, alpha, iterations: trace.len(), objective_trace: trace, flags })
}

pub fn recover_am<T: Real>(batch: &ObservationBatch<T>, sigma2: T, config: &AmConfig) -> Result<RecoveryResult<T>> {
    config.validate()?;
    let l = batch.signal_len();
    let p_est = power_spectrum_estimate(batch, sigma2);
    let family = estimate_u_family(batch, &p_est, sigma2)?;
    let mut flags: Vec<Flag> = family.iter().flat_map(|u| u.flags()).collect();
    let cx = build_cx(&family)?;
    let magnitudes = magnitude_estimate(&p_est)?;
    let outcome = alternating_minimization(&cx, random_alpha(l, config.init_seed), config)?;
    flags.extend(outcome.flags);
    let eps = lit::<T>(PHASE_EPS);
    let mut phases = Vec::with_capacity(l);
    for (index, z) in outcome.q.iter().enumerate() {
        let r = modulus(*z);
        if !(r >= eps) {
            return Err(MrfaError::DegeneratePhase { index, modulus: crate::scalar::to_f64(r) });
        }
        phases.push(z.unscale(r));
    }
    Ok(RecoveryResult {
        theta_tilde: combine(&phases, &magnitudes)?,
        lambda_tilde: p_est.lambda_tilde,
        algorithm: Algorithm::Am,
        iterations: outcome.iterations,
        objective_trace: outcome.objective_trace,
        flags,
    })
}
