//! Expectation-maximization over the unknown shifts.
//!
//! Conditioned on its shift `s`, an observation is `CN(0, R_s Σ R_s*)` with
//! `Σ = λθθ* + σ²I`. The E-step computes shift posteriors per observation;
//! the M-step is the probabilistic-PCA maximizer: the leading eigenpair of
//! the weighted, back-aligned sample covariance.
//!
//! Weights `w[j, s]` are indexed by the shift that generated `y_j`, so the
//! back-aligned vector is `v = R_{-s} y_j`.

use std::io::Write;

use nalgebra::DMatrix;
use num_complex::Complex;
use rand::SeedableRng;

use crate::error::{Flag, MrfaError, Result};
use crate::linalg::{leading_eigenpair, CMatrix};
use crate::metrics::align_error;
use crate::model::{complex_normal, dft, idft, Dft, ObservationBatch};
use crate::recover::{Algorithm, RecoveryResult};
use crate::rng::MrfaRng;
use crate::scalar::{czero, lit, norm, to_f64, Real};
use crate::spectral::{power_spectrum_estimate, tree_reduce};

pub const LAMBDA_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct EmState<T: Real> {
    pub theta: Vec<Complex<T>>,
    pub lambda: T,
    pub loglik: T,
    pub iteration: usize,
}

/// Scale applied to the Gaussian quadratic form in the E-step exponent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EStepConvention {
    /// `exp(-v* Σ⁻¹ v / 2)`.
    #[default]
    Printed,
    /// `exp(-v* Σ⁻¹ v)`, the circular complex normal density; the E-step is
    /// then the exact shift posterior and the likelihood ascends.
    ComplexGaussian,
}

impl EStepConvention {
    fn factor<T: Real>(self) -> T {
        match self {
            EStepConvention::Printed => lit(0.5),
            EStepConvention::ComplexGaussian => T::one(),
        }
    }
}

#[derive(Debug, Clone)]
pub enum EmInit<T: Real> {
    /// Start from the given signal and factor variance.
    Oracle { theta: Vec<Complex<T>>, lambda: T },
    /// Random unit signal from `seed`, `λ₀ = λ̃`.
    Random { seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmConfig {
    pub max_iterations: usize,
    /// Stop once the aligned change in `θ` falls below this.
    pub tolerance: f64,
    pub convention: EStepConvention,
}

impl Default for EmConfig {
    fn default() -> Self {
        EmConfig { max_iterations: 200, tolerance: 1e-6, convention: EStepConvention::Printed }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmTraceRow {
    pub iteration: usize,
    /// Log-likelihood of the parameters entering this iteration.
    pub loglik: f64,
    /// Aligned distance between consecutive `θ`; `None` for the initial row.
    pub theta_change: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct EmRun<T: Real> {
    pub result: RecoveryResult<T>,
    pub state: EmState<T>,
    pub trace: Vec<EmTraceRow>,
}

#[derive(Debug, Clone)]
pub struct MStep<T: Real> {
    pub theta: Vec<Complex<T>>,
    pub lambda: T,
    pub lambda_floored: bool,
    pub degenerate_gap: bool,
}

fn check_sigma2<T: Real>(sigma2: T) -> Result<()> {
    if sigma2 > T::zero() {
        Ok(())
    } else {
        Err(MrfaError::ZeroNoiseVariance)
    }
}

/// `q[j, s] = (R_{-s} y_j)* Σ⁻¹ (R_{-s} y_j)`, row-major `N × L`, using
/// `Σ⁻¹ = σ⁻²(I - λ/(σ²+λ) θθ*)` and
/// `θ* R_{-s} y = √L · idft(conj(θ̂) ⊙ ŷ)[s]`.
pub fn quadratic_forms<T: Real>(batch: &ObservationBatch<T>, theta: &[Complex<T>], lambda: T, sigma2: T) -> Result<Vec<T>> {
    check_sigma2(sigma2)?;
    let l = batch.signal_len();
    if theta.len() != l {
        return Err(MrfaError::LengthMismatch { expected: l, actual: theta.len() });
    }
    let plan = Dft::new(l);
    let theta_hat_conj: Vec<Complex<T>> = plan.forward(theta).into_iter().map(|z| z.conj()).collect();
    let lf = lit::<T>(l as f64);
    let shrink = lambda / (sigma2 + lambda) * lf;
    let inv_s2 = T::one() / sigma2;
    let mut out = vec![T::zero(); batch.n() * l];
    let mut buf = vec![czero::<T>(); l];
    for (y, row) in batch.fourier_rows().zip(out.chunks_exact_mut(l)) {
        let energy = y.iter().fold(T::zero(), |acc, z| acc + z.norm_sqr());
        for k in 0..l {
            buf[k] = theta_hat_conj[k] * y[k];
        }
        plan.inverse_in_place(&mut buf);
        for (q, c) in row.iter_mut().zip(&buf) {
            *q = inv_s2 * (energy - shrink * c.norm_sqr());
        }
    }
    Ok(out)
}

fn log_sum_exp<T: Real>(values: impl Iterator<Item = T> + Clone) -> T {
    let max = values.clone().fold(T::min_value().unwrap_or_else(|| -T::one() / T::default_epsilon()), |a, b| a.max(b));
    max + values.fold(T::zero(), |acc, v| acc + (v - max).exp()).ln()
}

fn log_det_sigma<T: Real>(l: usize, lambda: T, sigma2: T) -> T {
    (lambda + sigma2).ln() + lit::<T>((l - 1) as f64) * sigma2.ln()
}

fn loglik_from_forms<T: Real>(forms: &[T], l: usize, lambda: T, sigma2: T) -> T {
    let n = forms.len() / l;
    let constant = lit::<T>(l as f64).ln() + lit::<T>(l as f64) * T::pi().ln() + log_det_sigma(l, lambda, sigma2);
    tree_reduce(
        n,
        |range| range.fold(T::zero(), |acc, j| acc + log_sum_exp(forms[j * l..(j + 1) * l].iter().map(|q| -*q)) - constant),
        |a, b| *a += b,
    )
    .unwrap_or_else(T::zero)
}

/// Marginal log-likelihood under uniform shifts:
/// `Σ_j log[(1/L) Σ_s exp(-v_{js}* Σ⁻¹ v_{js}) / (π^L det Σ)]`.
pub fn log_likelihood<T: Real>(batch: &ObservationBatch<T>, theta: &[Complex<T>], lambda: T, sigma2: T) -> Result<T> {
    let forms = quadratic_forms(batch, theta, lambda, sigma2)?;
    Ok(loglik_from_forms(&forms, batch.signal_len(), lambda, sigma2))
}

fn weights_from_forms<T: Real>(forms: &[T], l: usize, convention: EStepConvention) -> DMatrix<T> {
    let n = forms.len() / l;
    let c = convention.factor::<T>();
    let mut w = DMatrix::<T>::zeros(n, l);
    for j in 0..n {
        let row = &forms[j * l..(j + 1) * l];
        let max = row.iter().map(|q| -c * *q).fold(-T::one() / T::default_epsilon(), |a, b| a.max(b));
        let mut total = T::zero();
        for s in 0..l {
            let e = (-c * row[s] - max).exp();
            w[(j, s)] = e;
            total += e;
        }
        for s in 0..l {
            w[(j, s)] /= total;
        }
    }
    w
}

/// Shift posteriors, `N × L`, rows summing to one.
pub fn e_step<T: Real>(batch: &ObservationBatch<T>, state: &EmState<T>, sigma2: T, convention: EStepConvention) -> Result<DMatrix<T>> {
    let forms = quadratic_forms(batch, &state.theta, state.lambda, sigma2)?;
    Ok(weights_from_forms(&forms, batch.signal_len(), convention))
}

/// Fourier-domain weighted back-aligned covariance
/// `Ŝ[k₁, k₂] = (1/N) Σ_j ŷ_j[k₁] conj(ŷ_j[k₂]) W_j[k₁ - k₂]` with
/// `W_j[d] = Σ_s w[j, s] e^{i2πsd/L}`; `S = F* Ŝ F`.
pub fn weighted_covariance_fourier<T: Real>(batch: &ObservationBatch<T>, weights: &DMatrix<T>) -> Result<CMatrix<T>> {
    let l = batch.signal_len();
    let n = batch.n();
    if weights.nrows() != n || weights.ncols() != l {
        return Err(MrfaError::LengthMismatch { expected: n * l, actual: weights.len() });
    }
    let plan = Dft::new(l);
    let sqrt_l = lit::<T>(l as f64).sqrt();
    let upper = tree_reduce(
        n,
        |range| {
            let mut acc = vec![czero::<T>(); l * l];
            let mut wj = vec![czero::<T>(); l];
            for j in range {
                for s in 0..l {
                    wj[s] = Complex::new(weights[(j, s)] * sqrt_l, T::zero());
                }
                plan.inverse_in_place(&mut wj);
                let y = batch.fourier_row(j);
                for k1 in 0..l {
                    let a = y[k1];
                    for k2 in k1..l {
                        acc[k1 * l + k2] += a * y[k2].conj() * wj[(k1 + l - k2) % l];
                    }
                }
            }
            acc
        },
        |a, b| a.iter_mut().zip(b).for_each(|(x, y)| *x += y),
    )
    .unwrap_or_else(|| vec![czero(); l * l]);
    let inv_n = T::one() / lit::<T>(n as f64);
    Ok(CMatrix::from_fn(l, l, |i, j| if i <= j { upper[i * l + j] * inv_n } else { upper[j * l + i].conj() * inv_n }))
}

/// `θ` = leading eigenvector of `S`, `λ = max(μ₁ - σ², LAMBDA_FLOOR)`.
pub fn m_step<T: Real>(batch: &ObservationBatch<T>, weights: &DMatrix<T>, sigma2: T) -> Result<MStep<T>> {
    let s_hat = weighted_covariance_fourier(batch, weights)?;
    let pair = leading_eigenpair(&s_hat)?;
    let raw = pair.value - sigma2;
    let floor = lit::<T>(LAMBDA_FLOOR);
    Ok(MStep { theta: idft(&pair.vector), lambda: raw.max(floor), lambda_floored: raw < floor, degenerate_gap: pair.degenerate })
}

fn random_theta<T: Real>(l: usize, seed: u64) -> Vec<Complex<T>> {
    let mut rng = MrfaRng::seed_from_u64(seed);
    loop {
        let v: Vec<Complex<f64>> = (0..l).map(|_| complex_normal(&mut rng, 1.0)).collect();
        let n = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if n > 0.0 {
            return v.into_iter().map(|z| Complex::new(lit(z.re / n), lit(z.im / n))).collect();
        }
    }
}

pub fn run_em<T: Real>(batch: &ObservationBatch<T>, init: &EmInit<T>, sigma2: T, config: &EmConfig) -> Result<EmRun<T>> {
    if config.max_iterations == 0 {
        return Err(MrfaError::InvalidParameter("max_iterations must be at least 1".into()));
    }
    check_sigma2(sigma2)?;
    let l = batch.signal_len();
    let (theta, lambda) = match init {
        EmInit::Oracle { theta, lambda } => {
            if theta.len() != l {
                return Err(MrfaError::LengthMismatch { expected: l, actual: theta.len() });
            }
            let n = norm(theta);
            (theta.iter().map(|z| z.unscale(n)).collect::<Vec<_>>(), *lambda)
        }
        EmInit::Random { seed } => {
            let p = power_spectrum_estimate(batch, sigma2);
            (random_theta(l, *seed), p.lambda_tilde.max(lit(LAMBDA_FLOOR)))
        }
    };
    let mut state = EmState { theta, lambda, loglik: T::zero(), iteration: 0 };
    let mut trace = Vec::new();
    let mut logliks = Vec::new();
    let mut flags = Vec::new();
    let mut change: Option<f64> = None;
    loop {
        let forms = quadratic_forms(batch, &state.theta, state.lambda, sigma2)?;
        state.loglik = loglik_from_forms(&forms, l, state.lambda, sigma2);
        logliks.push(state.loglik);
        trace.push(EmTraceRow { iteration: state.iteration, loglik: to_f64(state.loglik), theta_change: change });
        let converged = change.is_some_and(|c| c < config.tolerance);
        if converged || state.iteration >= config.max_iterations {
            break;
        }
        let weights = weights_from_forms(&forms, l, config.convention);
        let step = m_step(batch, &weights, sigma2)?;
        state.iteration += 1;
        if step.lambda_floored {
            flags.push(Flag::LambdaFloor { iteration: state.iteration });
        }
        if step.degenerate_gap {
            flags.push(Flag::EmDegenerateGap { iteration: state.iteration });
        }
        change = Some(to_f64(align_error(&state.theta, &step.theta)?.error));
        state.theta = step.theta;
        state.lambda = step.lambda;
    }
    let result = RecoveryResult {
        theta_tilde: state.theta.clone(),
        lambda_tilde: state.lambda,
        algorithm: Algorithm::Em,
        iterations: state.iteration,
        objective_trace: logliks,
        flags,
    };
    Ok(EmRun { result, state, trace })
}

/// Writes `iteration,loglik,theta_change` rows.
pub fn write_trace_csv<W: Write>(trace: &[EmTraceRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["iteration", "loglik", "theta_change"])?;
    for row in trace {
        w.write_record([
            row.iteration.to_string(),
            format!("{:e}", row.loglik),
            row.theta_change.map(|c| format!("{c:e}")).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Signal estimate in the Fourier domain, for callers that need `θ̂`.
pub fn fourier_estimate<T: Real>(state: &EmState<T>) -> Vec<Complex<T>> {
    dft(&state.theta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{frobenius, hermitian_asymmetry, hermitian_eigen, outer};
    use crate::model::{
        cyclic_shift, generate_observations, generate_observations_with, generate_signal, ConstantFactor, ModelParams, Signal,
        SignalNormalization,
    };
    use crate::rng::rng_from_seed;
    use crate::scalar::inner;

    type C = Complex<f64>;

    fn unit_signal(l: usize, seed: u64) -> Signal<f64> {
        generate_signal(l, &mut rng_from_seed(seed), SignalNormalization::UnitPowerSpectrum).unwrap()
    }

    fn state(theta: &[C], lambda: f64) -> EmState<f64> {
        EmState { theta: theta.to_vec(), lambda, loglik: 0.0, iteration: 0 }
    }

    fn sigma_inverse(theta: &[C], lambda: f64, sigma2: f64) -> CMatrix<f64> {
        let l = theta.len();
        let sigma = outer(theta) * C::new(lambda, 0.0) + CMatrix::<f64>::identity(l, l) * C::new(sigma2, 0.0);
        sigma.try_inverse().unwrap()
    }

    fn dense_form(v: &[C], inv: &CMatrix<f64>) -> f64 {
        let x = nalgebra::DVector::from_column_slice(v);
        (x.adjoint() * inv * &x)[(0, 0)].re
    }

    #[test]
    fn quadratic_forms_match_dense_inverse() {
        let sig = unit_signal(6, 1);
        let params = ModelParams::new(6, 1.0, 0.3).unwrap();
        let batch = generate_observations(&sig, &params, 5, &mut rng_from_seed(2)).unwrap();
        let theta = random_theta::<f64>(6, 3);
        let forms = quadratic_forms(&batch, &theta, 0.8, 0.3).unwrap();
        let inv = sigma_inverse(&theta, 0.8, 0.3);
        for j in 0..5 {
            for s in 0..6 {
                let v = cyclic_shift(batch.observation(j), -(s as i64));
                assert!((forms[j * 6 + s] - dense_form(&v, &inv)).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn isotropic_limit_gives_uniform_weights() {
        let sig = unit_signal(8, 4);
        let params = ModelParams::new(8, 1.0, 0.5).unwrap();
        let batch = generate_observations(&sig, &params, 20, &mut rng_from_seed(5)).unwrap();
        for conv in [EStepConvention::Printed, EStepConvention::ComplexGaussian] {
            let w = e_step(&batch, &state(sig.theta(), 0.0), 0.5, conv).unwrap();
            assert!(w.iter().all(|x| (x - 0.125).abs() < 1e-12));
        }
    }

    #[test]
    fn weight_concentrates_on_generating_shift() {
        let sig = unit_signal(8, 6);
        let y: Vec<C> = cyclic_shift(sig.theta(), 3).into_iter().map(|z| z * C::new(30.0, 10.0)).collect();
        let params = ModelParams::new(8, 1.0, 1e-4).unwrap();
        let batch = ObservationBatch::from_observations(y, params).unwrap();
        let w = e_step(&batch, &state(sig.theta(), 1.0), 1e-4, EStepConvention::Printed).unwrap();
        assert!(w[(0, 3)] > 0.99);
        let brute = (0..8)
            .map(|s| {
                let v = cyclic_shift(batch.observation(0), -(s as i64));
                (s, dense_form(&v, &sigma_inverse(sig.theta(), 1.0, 1e-4)))
            })
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap();
        assert_eq!(brute.0, 3);
    }

    #[test]
    fn weights_are_normalized_and_phase_invariant() {
        let sig = unit_signal(7, 7);
        let params = ModelParams::from_snr(7, 0.3, 1.0).unwrap();
        let batch = generate_observations(&sig, &params, 50, &mut rng_from_seed(8)).unwrap();
        let theta = random_theta::<f64>(7, 9);
        let w = e_step(&batch, &state(&theta, 1.2), params.sigma2, EStepConvention::Printed).unwrap();
        for j in 0..50 {
            assert!((w.row(j).sum() - 1.0).abs() < 1e-12);
        }
        let rotated: Vec<C> = theta.iter().map(|z| z * C::from_polar(1.0, 2.2)).collect();
        let w2 = e_step(&batch, &state(&rotated, 1.2), params.sigma2, EStepConvention::Printed).unwrap();
        assert!((w - w2).abs().max() < 1e-13);
    }

    #[test]
    fn zero_noise_is_rejected() {
        let sig = unit_signal(4, 10);
        let params = ModelParams::new(4, 1.0, 0.0).unwrap();
        let batch = generate_observations(&sig, &params, 3, &mut rng_from_seed(11)).unwrap();
        assert!(matches!(e_step(&batch, &state(sig.theta(), 1.0), 0.0, EStepConvention::Printed), Err(MrfaError::ZeroNoiseVariance)));
        assert!(log_likelihood(&batch, sig.theta(), 1.0, 0.0).is_err());
    }

    #[test]
    fn fourier_covariance_matches_time_domain_sum() {
        let sig = unit_signal(5, 12);
        let params = ModelParams::new(5, 1.0, 0.2).unwrap();
        let batch = generate_observations(&sig, &params, 30, &mut rng_from_seed(13)).unwrap();
        let w = e_step(&batch, &state(&random_theta::<f64>(5, 14), 1.0), 0.2, EStepConvention::Printed).unwrap();
        let mut direct = CMatrix::<f64>::zeros(5, 5);
        for j in 0..30 {
            for s in 0..5 {
                let v = cyclic_shift(batch.observation(j), -(s as i64));
                direct += outer(&v) * C::new(w[(j, s)] / 30.0, 0.0);
            }
        }
        let s_hat = weighted_covariance_fourier(&batch, &w).unwrap();
        let f = CMatrix::<f64>::from_fn(5, 5, |k, l| C::from_polar(1.0 / 5f64.sqrt(), -std::f64::consts::TAU * (k * l) as f64 / 5.0));
        let time = f.adjoint() * &s_hat * &f;
        assert!(frobenius(&(time - &direct)) < 1e-12);
        assert!(hermitian_asymmetry(&s_hat) < 1e-12);
        let (values, _) = hermitian_eigen(&s_hat).unwrap();
        assert!(values.iter().all(|v| *v >= -1e-10));
    }

    #[test]
    fn m_step_with_true_shifts_recovers_signal() {
        let sig = unit_signal(8, 15);
        let params = ModelParams::new(8, 1.0, 0.0).unwrap();
        let batch = generate_observations_with(&sig, &params, 12, &ConstantFactor(C::new(1.0, 0.0)), &mut rng_from_seed(16)).unwrap();
        let mut w = DMatrix::<f64>::zeros(12, 8);
        for (j, t) in batch.truth().unwrap().iter().enumerate() {
            w[(j, t.shift)] = 1.0;
        }
        let step = m_step(&batch, &w, 0.0).unwrap();
        assert!((inner(&step.theta, sig.theta()).norm() - 1.0).abs() < 1e-10);
        assert!((step.lambda - 1.0).abs() < 1e-10);
        let floored = m_step(&batch, &w, 5.0).unwrap();
        assert!(floored.lambda_floored && floored.lambda == LAMBDA_FLOOR);
    }

    /// `Σ_js w[j,s] (-v* Σ⁻¹ v) - N log det Σ`.
    fn expected_complete_loglik(batch: &ObservationBatch<f64>, w: &DMatrix<f64>, theta: &[C], lambda: f64, sigma2: f64) -> f64 {
        let forms = quadratic_forms(batch, theta, lambda, sigma2).unwrap();
        let l = batch.signal_len();
        let mut acc = 0.0;
        for j in 0..batch.n() {
            for s in 0..l {
                acc -= w[(j, s)] * forms[j * l + s];
            }
        }
        acc - batch.n() as f64 * log_det_sigma(l, lambda, sigma2)
    }

    #[test]
    fn m_step_matches_brute_force_maximizer() {
        let sig = unit_signal(2, 17);
        let params = ModelParams::new(2, 1.0, 0.4).unwrap();
        let batch = generate_observations(&sig, &params, 40, &mut rng_from_seed(18)).unwrap();
        let w = e_step(&batch, &state(&random_theta::<f64>(2, 19), 0.7), 0.4, EStepConvention::ComplexGaussian).unwrap();
        let step = m_step(&batch, &w, 0.4).unwrap();
        let ours = expected_complete_loglik(&batch, &w, &step.theta, step.lambda, 0.4);
        let (nt, np, nl) = (90, 180, 200);
        let mut best = (f64::NEG_INFINITY, vec![], 0.0);
        for it in 0..=nt {
            let t = std::f64::consts::FRAC_PI_2 * it as f64 / nt as f64;
            for ip in 0..np {
                let psi = std::f64::consts::TAU * ip as f64 / np as f64;
                let theta = vec![C::new(t.cos(), 0.0), C::from_polar(t.sin(), psi)];
                for il in 1..=nl {
                    let lambda = 3.0 * il as f64 / nl as f64;
                    let v = expected_complete_loglik(&batch, &w, &theta, lambda, 0.4);
                    if v > best.0 {
                        best = (v, theta.clone(), lambda);
                    }
                }
            }
        }
        assert!(ours >= best.0 - 1e-9);
        assert!(inner(&best.1, &step.theta).norm() > (1.0f64 - 0.03).max(0.0));
        assert!((best.2 - step.lambda).abs() <= 3.0 / nl as f64 * 1.5 + 0.02);
    }

    #[test]
    fn log_likelihood_examples() {
        let sig = unit_signal(4, 20);
        let params = ModelParams::new(4, 1.0, 0.6).unwrap();
        let batch = generate_observations(&sig, &params, 10, &mut rng_from_seed(21)).unwrap();
        let iso = log_likelihood(&batch, sig.theta(), 0.0, 0.6).unwrap();
        let want: f64 = batch
            .observations()
            .map(|y| -y.iter().map(|z| z.norm_sqr()).sum::<f64>() / 0.6 - 4.0 * (std::f64::consts::PI * 0.6).ln())
            .sum();
        assert!((iso - want).abs() < 1e-10);

        let a = log_likelihood(&batch, sig.theta(), 0.9, 0.6).unwrap();
        let rotated: Vec<C> = sig.theta().iter().map(|z| z * C::from_polar(1.0, -0.8)).collect();
        assert!((a - log_likelihood(&batch, &rotated, 0.9, 0.6).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn log_likelihood_single_observation_by_hand() {
        let theta = vec![C::new(0.6, 0.0), C::new(0.0, 0.8)];
        let y = vec![C::new(0.3, -1.1), C::new(0.5, 0.2)];
        let (lambda, sigma2) = (1.3, 0.45);
        let batch = ObservationBatch::from_observations(y.clone(), ModelParams::new(2, lambda, sigma2).unwrap()).unwrap();
        let sigma = outer(&theta) * C::new(lambda, 0.0) + CMatrix::<f64>::identity(2, 2) * C::new(sigma2, 0.0);
        let det = sigma.determinant().re;
        let inv = sigma.try_inverse().unwrap();
        let density: f64 =
            [y.clone(), vec![y[1], y[0]]].iter().map(|v| (-dense_form(v, &inv)).exp() / (std::f64::consts::PI.powi(2) * det)).sum::<f64>()
                / 2.0;
        assert!((log_likelihood(&batch, &theta, lambda, sigma2).unwrap() - density.ln()).abs() < 1e-12);
    }

    #[test]
    fn oracle_start_on_clean_data_is_a_fixed_point() {
        let sig = unit_signal(8, 22);
        let params = ModelParams::new(8, 1.0, 0.0).unwrap();
        let batch = generate_observations(&sig, &params, 50, &mut rng_from_seed(23)).unwrap();
        let init = EmInit::Oracle { theta: sig.theta().to_vec(), lambda: 1.0 };
        let run = run_em(&batch, &init, 1e-10, &EmConfig::default()).unwrap();
        assert!(run.result.iterations <= 2);
        assert!(align_error(sig.theta(), &run.result.theta_tilde).unwrap().error <= 1e-8);
    }

    #[test]
    fn likelihood_ascends_under_exact_posterior() {
        for seed in 0..5 {
            let sig = unit_signal(8, 100 + seed);
            let params = ModelParams::from_snr(8, 0.5, 1.0).unwrap();
            let batch = generate_observations(&sig, &params, 300, &mut rng_from_seed(200 + seed)).unwrap();
            let config = EmConfig { max_iterations: 30, tolerance: 0.0, convention: EStepConvention::ComplexGaussian };
            let run = run_em(&batch, &EmInit::Random { seed }, params.sigma2, &config).unwrap();
            for w in run.result.objective_trace.windows(2) {
                assert!(w[1] >= w[0] - 1e-9 * w[0].abs(), "{} -> {}", w[0], w[1]);
            }
        }
    }

    #[test]
    fn trace_csv_layout() {
        let rows = [
            EmTraceRow { iteration: 0, loglik: -10.5, theta_change: None },
            EmTraceRow { iteration: 1, loglik: -9.25, theta_change: Some(0.5) },
        ];
        let mut buf = Vec::new();
        write_trace_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "iteration,loglik,theta_change");
        assert_eq!(lines[1], "0,-1.05e1,");
        assert_eq!(lines[2], "1,-9.25e0,5e-1");
    }

    #[test]
    fn run_em_is_deterministic() {
        let sig = unit_signal(6, 24);
        let params = ModelParams::from_snr(6, 1.0, 1.0).unwrap();
        let batch = generate_observations(&sig, &params, 200, &mut rng_from_seed(25)).unwrap();
        let run = || run_em(&batch, &EmInit::Random { seed: 3 }, params.sigma2, &EmConfig::default()).unwrap().result.theta_tilde;
        assert_eq!(run(), run());
    }
}
