//! Generative model, unitary DFT and cyclic shifts.
//!
//! Time-domain observations follow `y = R_s{a θ} + η`; in the Fourier domain
//! the shift becomes a modulation, `ŷ[k] = ω^{sk} a θ̂[k] + η̂[k]` with
//! `ω = e^{-i2π/L}`. All index arithmetic is modulo `L`.

use std::sync::Arc;

use num_complex::Complex;
use rand::Rng;
use rand_distr::weighted::WeightedIndex;
use rand_distr::{Distribution, StandardNormal};
use rustfft::{Fft, FftPlanner};

use crate::error::{MrfaError, Result};
use crate::scalar::{czero, lit, norm, scale, Real};

/// Planned unitary DFT of a fixed length.
///
/// `forward(v)[k] = L^{-1/2} Σ_ℓ ω^{ℓk} v[ℓ]` with `ω = e^{-i2π/L}`, and
/// `inverse` is its adjoint.
#[derive(Clone)]
pub struct Dft<T: Real> {
    len: usize,
    forward: Arc<dyn Fft<T>>,
    inverse: Arc<dyn Fft<T>>,
    scale: T,
}

impl<T: Real> Dft<T> {
    pub fn new(len: usize) -> Self {
        assert!(len >= 1, "DFT length must be positive");
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(len);
        let inverse = planner.plan_fft_inverse(len);
        let scale = T::one() / lit::<T>(len as f64).sqrt();
        Dft { len, forward, inverse, scale }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn forward_in_place(&self, buf: &mut [Complex<T>]) {
        assert_eq!(buf.len(), self.len);
        self.forward.process(buf);
        buf.iter_mut().for_each(|z| *z = *z * self.scale);
    }

    pub fn inverse_in_place(&self, buf: &mut [Complex<T>]) {
        assert_eq!(buf.len(), self.len);
        self.inverse.process(buf);
        buf.iter_mut().for_each(|z| *z = *z * self.scale);
    }

    pub fn forward(&self, v: &[Complex<T>]) -> Vec<Complex<T>> {
        let mut out = v.to_vec();
        self.forward_in_place(&mut out);
        out
    }

    pub fn inverse(&self, v: &[Complex<T>]) -> Vec<Complex<T>> {
        let mut out = v.to_vec();
        self.inverse_in_place(&mut out);
        out
    }
}

/// Unitary DFT of `v`.
pub fn dft<T: Real>(v: &[Complex<T>]) -> Vec<Complex<T>> {
    Dft::new(v.len()).forward(v)
}

/// Inverse unitary DFT, `F* v`.
pub fn idft<T: Real>(v: &[Complex<T>]) -> Vec<Complex<T>> {
    Dft::new(v.len()).inverse(v)
}

/// Reduces an arbitrary integer index modulo `l` into `0..l`.
#[inline]
pub fn wrap_index(i: i64, l: usize) -> usize {
    i.rem_euclid(l as i64) as usize
}

/// `R_s{v}[ℓ] = v[(ℓ - s) mod L]`.
pub fn cyclic_shift<T: Clone>(v: &[T], s: i64) -> Vec<T> {
    let l = v.len();
    if l == 0 {
        return Vec::new();
    }
    (0..l).map(|i| v[wrap_index(i as i64 - s, l)].clone()).collect()
}

/// Draws from `CN(0, variance)`: independent real and imaginary parts, each
/// with variance `variance / 2`.
pub fn complex_normal<R: Rng + ?Sized>(rng: &mut R, variance: f64) -> Complex<f64> {
    let sd = (variance / 2.0).sqrt();
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex::new(sd * re, sd * im)
}

/// Unknown signal `θ`: a complex vector of length `L ≥ 2` with unit norm.
#[derive(Debug, Clone, PartialEq)]
pub struct Signal<T: Real> {
    theta: Vec<Complex<T>>,
}

impl<T: Real> Signal<T> {
    /// Normalizes `theta` to unit norm.
    pub fn new(theta: Vec<Complex<T>>) -> Result<Self> {
        if theta.len() < 2 {
            return Err(MrfaError::InvalidParameter(format!("signal length must be at least 2, got {}", theta.len())));
        }
        let n = norm(&theta);
        if !(n > T::zero()) || !n.is_finite() {
            return Err(MrfaError::InvalidParameter("signal must have finite nonzero norm".into()));
        }
        let theta = scale(&theta, Complex::new(T::one() / n, T::zero()));
        Ok(Signal { theta })
    }

    /// Builds the signal whose unitary DFT is (a normalized) `theta_hat`.
    pub fn from_fourier(theta_hat: &[Complex<T>]) -> Result<Self> {
        Self::new(idft(theta_hat))
    }

    pub fn theta(&self) -> &[Complex<T>] {
        &self.theta
    }

    pub fn into_inner(self) -> Vec<Complex<T>> {
        self.theta
    }

    pub fn len(&self) -> usize {
        self.theta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta.is_empty()
    }

    /// `θ̂ = F θ`.
    pub fn fourier(&self) -> Vec<Complex<T>> {
        dft(&self.theta)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SignalNormalization {
    /// `‖θ‖ = 1` only.
    UnitNorm,
    /// Every Fourier coefficient has modulus `1/√L`.
    UnitPowerSpectrum,
}

/// Draws a complex Gaussian signal and normalizes it.
pub fn generate_signal<T: Real, R: Rng + ?Sized>(l: usize, rng: &mut R, normalization: SignalNormalization) -> Result<Signal<T>> {
    if l < 2 {
        return Err(MrfaError::InvalidParameter(format!("signal length must be at least 2, got {l}")));
    }
    loop {
        let raw: Vec<Complex<T>> = (0..l)
            .map(|_| {
                let z = complex_normal(rng, 1.0);
                Complex::new(lit(z.re), lit(z.im))
            })
            .collect();
        match normalization {
            SignalNormalization::UnitNorm => {
                if norm(&raw) > T::zero() {
                    return Signal::new(raw);
                }
            }
            SignalNormalization::UnitPowerSpectrum => {
                let spectrum = dft(&raw);
                if spectrum.iter().any(|z| z.norm_sqr() == T::zero()) {
                    continue;
                }
                let bin = T::one() / lit::<T>(l as f64).sqrt();
                let hat: Vec<Complex<T>> = spectrum.iter().map(|z| z * (bin / z.norm_sqr().sqrt())).collect();
                return Signal::from_fourier(&hat);
            }
        }
    }
}

/// Law of the cyclic shift `s`.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum ShiftDistribution {
    #[default]
    Uniform,
    /// Probability of each shift in `0..L`.
    Weighted(Vec<f64>),
}

impl ShiftDistribution {
    fn validate(&self, l: usize) -> Result<()> {
        if let ShiftDistribution::Weighted(p) = self {
            if p.len() != l {
                return Err(MrfaError::LengthMismatch { expected: l, actual: p.len() });
            }
            if p.iter().any(|&w| !(w >= 0.0) || !w.is_finite()) {
                return Err(MrfaError::InvalidParameter("shift probabilities must be finite and nonnegative".into()));
            }
            let total: f64 = p.iter().sum();
            if (total - 1.0).abs() > 1e-9 {
                return Err(MrfaError::InvalidParameter(format!("shift probabilities sum to {total}, expected 1")));
            }
        }
        Ok(())
    }
}

enum ShiftSampler {
    Uniform(usize),
    Weighted(WeightedIndex<f64>),
}

impl ShiftSampler {
    fn new(dist: &ShiftDistribution, l: usize) -> Result<Self> {
        Ok(match dist {
            ShiftDistribution::Uniform => ShiftSampler::Uniform(l),
            ShiftDistribution::Weighted(p) => {
                ShiftSampler::Weighted(WeightedIndex::new(p.iter().copied()).map_err(|e| MrfaError::InvalidParameter(e.to_string()))?)
            }
        })
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        match self {
            ShiftSampler::Uniform(l) => rng.random_range(0..*l),
            ShiftSampler::Weighted(w) => w.sample(rng),
        }
    }
}

/// Parameters of the observation model.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<T: Real> {
    /// Variance of the factor `a`.
    pub lambda: T,
    /// Noise variance `σ²`.
    pub sigma2: T,
    pub l: usize,
    pub shift_distribution: ShiftDistribution,
}

impl<T: Real> ModelParams<T> {
    pub fn new(l: usize, lambda: T, sigma2: T) -> Result<Self> {
        let p = ModelParams { lambda, sigma2, l, shift_distribution: ShiftDistribution::Uniform };
        p.validate()?;
        Ok(p)
    }

    /// `σ² = λ / (L · SNR)`.
    pub fn from_snr(l: usize, snr: T, lambda: T) -> Result<Self> {
        if !(snr > T::zero()) {
            return Err(MrfaError::InvalidParameter(format!("SNR must be positive, got {snr}")));
        }
        Self::new(l, lambda, lambda / (lit::<T>(l as f64) * snr))
    }

    pub fn with_shift_distribution(mut self, dist: ShiftDistribution) -> Result<Self> {
        self.shift_distribution = dist;
        self.validate()?;
        Ok(self)
    }

    /// `SNR = λ / (L σ²)`, undefined when `σ² = 0`.
    pub fn snr(&self) -> Option<T> {
        (self.sigma2 > T::zero()).then(|| self.lambda / (lit::<T>(self.l as f64) * self.sigma2))
    }

    pub fn validate(&self) -> Result<()> {
        if self.l < 2 {
            return Err(MrfaError::InvalidParameter(format!("signal length must be at least 2, got {}", self.l)));
        }
        if !(self.lambda >= T::zero()) {
            return Err(MrfaError::InvalidParameter("lambda must be nonnegative".into()));
        }
        if !(self.sigma2 >= T::zero()) {
            return Err(MrfaError::InvalidParameter("sigma2 must be nonnegative".into()));
        }
        self.shift_distribution.validate(self.l)
    }
}

/// Source of the random factor `a`.
pub trait FactorSampler {
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Complex<f64>;
    /// `E|a|²`.
    fn second_moment(&self) -> f64;
    /// `E|a|⁴`.
    fn fourth_moment(&self) -> f64;
}

/// `a ~ CN(0, λ)`.
#[derive(Debug, Clone, Copy)]
pub struct ComplexGaussianFactor {
    pub lambda: f64,
}

impl FactorSampler for ComplexGaussianFactor {
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Complex<f64> {
        complex_normal(rng, self.lambda)
    }

    fn second_moment(&self) -> f64 {
        self.lambda
    }

    fn fourth_moment(&self) -> f64 {
        2.0 * self.lambda * self.lambda
    }
}

/// Degenerate factor `a ≡ value` (plain multi-reference alignment).
#[derive(Debug, Clone, Copy)]
pub struct ConstantFactor(pub Complex<f64>);

impl FactorSampler for ConstantFactor {
    fn sample<R: Rng + ?Sized>(&self, _rng: &mut R) -> Complex<f64> {
        self.0
    }

    fn second_moment(&self) -> f64 {
        self.0.norm_sqr()
    }

    fn fourth_moment(&self) -> f64 {
        self.0.norm_sqr().powi(2)
    }
}

/// `a = √λ e^{iφ}` with `φ` uniform.
#[derive(Debug, Clone, Copy)]
pub struct RandomPhaseFactor {
    pub lambda: f64,
}

impl FactorSampler for RandomPhaseFactor {
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Complex<f64> {
        let phi = rng.random::<f64>() * std::f64::consts::TAU;
        Complex::from_polar(self.lambda.sqrt(), phi)
    }

    fn second_moment(&self) -> f64 {
        self.lambda
    }

    fn fourth_moment(&self) -> f64 {
        self.lambda * self.lambda
    }
}

/// Ground truth for one observation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Truth {
    pub shift: usize,
    pub factor: Complex<f64>,
}

/// `N` observations of length `L` with their unitary DFTs.
#[derive(Debug, Clone)]
pub struct ObservationBatch<T: Real> {
    l: usize,
    n: usize,
    observations: Vec<Complex<T>>,
    fourier: Vec<Complex<T>>,
    truth: Option<Vec<Truth>>,
    params: ModelParams<T>,
}

impl<T: Real> ObservationBatch<T> {
    /// Wraps row-major time-domain observations (`N × L`) and computes their
    /// DFTs.
    pub fn from_observations(observations: Vec<Complex<T>>, params: ModelParams<T>) -> Result<Self> {
        params.validate()?;
        let l = params.l;
        if observations.is_empty() || observations.len() % l != 0 {
            return Err(MrfaError::InvalidParameter(format!(
                "observation buffer of length {} is not a nonempty multiple of L = {l}",
                observations.len()
            )));
        }
        let n = observations.len() / l;
        let plan = Dft::new(l);
        let mut fourier = observations.clone();
        fourier.chunks_exact_mut(l).for_each(|row| plan.forward_in_place(row));
        Ok(ObservationBatch { l, n, observations, fourier, truth: None, params })
    }

    pub fn with_truth(mut self, truth: Vec<Truth>) -> Result<Self> {
        if truth.len() != self.n {
            return Err(MrfaError::LengthMismatch { expected: self.n, actual: truth.len() });
        }
        self.truth = Some(truth);
        Ok(self)
    }

    /// Signal length `L`.
    pub fn signal_len(&self) -> usize {
        self.l
    }

    /// Number of observations `N`.
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn params(&self) -> &ModelParams<T> {
        &self.params
    }

    pub fn truth(&self) -> Option<&[Truth]> {
        self.truth.as_deref()
    }

    pub fn observation(&self, i: usize) -> &[Complex<T>] {
        &self.observations[i * self.l..(i + 1) * self.l]
    }

    pub fn fourier_row(&self, i: usize) -> &[Complex<T>] {
        &self.fourier[i * self.l..(i + 1) * self.l]
    }

    pub fn observations(&self) -> impl ExactSizeIterator<Item = &[Complex<T>]> {
        self.observations.chunks_exact(self.l)
    }

    pub fn fourier_rows(&self) -> impl ExactSizeIterator<Item = &[Complex<T>]> {
        self.fourier.chunks_exact(self.l)
    }

    /// Row-major `N × L` Fourier coefficients.
    pub fn fourier_flat(&self) -> &[Complex<T>] {
        &self.fourier
    }

    pub fn observations_flat(&self) -> &[Complex<T>] {
        &self.observations
    }
}

/// Draws `n` observations with `a ~ CN(0, λ)`.
pub fn generate_observations<T: Real, R: Rng + ?Sized>(
    signal: &Signal<T>,
    params: &ModelParams<T>,
    n: usize,
    rng: &mut R,
) -> Result<ObservationBatch<T>> {
    let factor = ComplexGaussianFactor { lambda: crate::scalar::to_f64(params.lambda) };
    generate_observations_with(signal, params, n, &factor, rng)
}

/// Draws `n` observations `y_i = R_{s_i}{a_i θ} + η_i`.
///
/// Per observation the stream is consumed as: shift, factor, then `L`
/// complex noise samples.
pub fn generate_observations_with<T: Real, F: FactorSampler, R: Rng + ?Sized>(
    signal: &Signal<T>,
    params: &ModelParams<T>,
    n: usize,
    factor: &F,
    rng: &mut R,
) -> Result<ObservationBatch<T>> {
    params.validate()?;
    let l = params.l;
    if signal.len() != l {
        return Err(MrfaError::LengthMismatch { expected: l, actual: signal.len() });
    }
    if n == 0 {
        return Err(MrfaError::InvalidParameter("need at least one observation".into()));
    }
    let shifts = ShiftSampler::new(&params.shift_distribution, l)?;
    let sigma2 = crate::scalar::to_f64(params.sigma2);
    let theta = signal.theta();
    let mut observations = vec![czero::<T>(); n * l];
    let mut truth = Vec::with_capacity(n);
    for row in observations.chunks_exact_mut(l) {
        let s = shifts.sample(rng);
        let a = factor.sample(rng);
        let a_t = Complex::new(lit::<T>(a.re), lit::<T>(a.im));
        for (ell, out) in row.iter_mut().enumerate() {
            let eta = complex_normal(rng, sigma2);
            let clean = theta[wrap_index(ell as i64 - s as i64, l)] * a_t;
            *out = clean + Complex::new(lit::<T>(eta.re), lit::<T>(eta.im));
        }
        truth.push(Truth { shift: s, factor: a });
    }
    ObservationBatch::from_observations(observations, params.clone())?.with_truth(truth)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use proptest::prelude::*;

    type C = Complex<f64>;

    fn naive_dft(v: &[C]) -> Vec<C> {
        let l = v.len();
        (0..l)
            .map(|k| {
                v.iter().enumerate().fold(C::new(0.0, 0.0), |acc, (j, x)| {
                    let phase = -std::f64::consts::TAU * (j * k) as f64 / l as f64;
                    acc + x * C::from_polar(1.0, phase)
                }) / (l as f64).sqrt()
            })
            .collect()
    }

    fn close(a: &[C], b: &[C], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).norm() <= tol)
    }

    fn random_vec(l: usize, seed: u64) -> Vec<C> {
        let mut rng = rng_from_seed(seed);
        (0..l).map(|_| complex_normal(&mut rng, 1.0)).collect()
    }

    #[test]
    fn dft_of_delta_is_constant() {
        let mut v = vec![C::new(0.0, 0.0); 4];
        v[0] = C::new(1.0, 0.0);
        assert!(close(&dft(&v), &[C::new(0.5, 0.0); 4], 1e-15));
    }

    #[test]
    fn dft_of_constant_is_delta() {
        let c = C::new(0.3, -1.2);
        let out = dft(&[c; 4]);
        assert!(close(&out, &[c * 2.0, C::default(), C::default(), C::default()], 1e-14));
    }

    #[test]
    fn dft_length_two_by_hand() {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let out = dft(&[C::new(1.0, 0.0), C::new(0.0, 1.0)]);
        assert!(close(&out, &[C::new(s, s), C::new(s, -s)], 1e-15));
    }

    #[test]
    fn dft_matches_direct_kernel() {
        for l in [1usize, 2, 3, 5, 8, 16, 31] {
            let v = random_vec(l, l as u64);
            assert!(close(&dft(&v), &naive_dft(&v), 1e-12), "L = {l}");
        }
    }

    #[test]
    fn idft_by_hand_and_zero() {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let out = idft(&[C::new(1.0, 0.0), C::new(0.0, 0.0)]);
        assert!(close(&out, &[C::new(s, 0.0), C::new(s, 0.0)], 1e-15));
        assert!(idft(&[C::default(); 6]).iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn idft_inverts_dft() {
        let v = random_vec(16, 3);
        assert!(close(&idft(&dft(&v)), &v, 1e-12));
    }

    #[test]
    fn cyclic_shift_definition() {
        let v = [1, 2, 3, 4];
        assert_eq!(cyclic_shift(&v, 0), v.to_vec());
        assert_eq!(cyclic_shift(&v, 1), vec![4, 1, 2, 3]);
        assert_eq!(cyclic_shift(&v, -1), vec![2, 3, 4, 1]);
        assert_eq!(cyclic_shift(&v, 9), vec![4, 1, 2, 3]);
    }

    #[test]
    fn shift_becomes_modulation() {
        let l = 8;
        let v = random_vec(l, 11);
        let hat = dft(&v);
        for s in 0..l as i64 {
            let shifted = dft(&cyclic_shift(&v, s));
            for k in 0..l {
                let omega = C::from_polar(1.0, -std::f64::consts::TAU * (s as f64) * k as f64 / l as f64);
                assert!((shifted[k] - omega * hat[k]).norm() < 1e-12);
            }
        }
    }

    proptest! {
        #[test]
        fn shifts_compose(s in -40i64..40, t in -40i64..40, l in 1usize..12) {
            let v: Vec<usize> = (0..l).collect();
            prop_assert_eq!(cyclic_shift(&cyclic_shift(&v, s), t), cyclic_shift(&v, wrap_index(s + t, l) as i64));
        }

        #[test]
        fn dft_preserves_norm(seed in any::<u64>(), l in 1usize..40) {
            let v = random_vec(l, seed);
            prop_assert!((norm(&dft(&v)) - norm(&v)).abs() < 1e-10);
        }
    }

    #[test]
    fn unit_power_spectrum_signal() {
        let mut rng = rng_from_seed(5);
        let s: Signal<f64> = generate_signal(16, &mut rng, SignalNormalization::UnitPowerSpectrum).unwrap();
        assert!(s.fourier().iter().all(|z| (z.norm() - 0.25).abs() < 1e-12));
        assert!((norm(s.theta()) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn unit_norm_signal_and_determinism() {
        let a: Signal<f64> = generate_signal(4, &mut rng_from_seed(9), SignalNormalization::UnitNorm).unwrap();
        let b: Signal<f64> = generate_signal(4, &mut rng_from_seed(9), SignalNormalization::UnitNorm).unwrap();
        assert_eq!(a, b);
        assert!((norm(a.theta()) - 1.0).abs() < 1e-12);
        assert!(generate_signal::<f64, _>(1, &mut rng_from_seed(9), SignalNormalization::UnitNorm).is_err());
    }

    #[test]
    fn f32_signal_generation() {
        let s: Signal<f32> = generate_signal(8, &mut rng_from_seed(1), SignalNormalization::UnitPowerSpectrum).unwrap();
        let bin = 1.0 / 8f32.sqrt();
        assert!(s.fourier().iter().all(|z| (z.norm() - bin).abs() < 1e-5));
    }

    #[test]
    fn snr_relation() {
        let p = ModelParams::<f64>::from_snr(16, 0.25, 1.0).unwrap();
        assert!((p.sigma2 - 0.25).abs() < 1e-15);
        assert!((p.snr().unwrap() - 0.25).abs() < 1e-15);
        assert!(ModelParams::<f64>::new(16, 1.0, 0.0).unwrap().snr().is_none());
    }

    #[test]
    fn shift_distribution_validation() {
        let p = ModelParams::<f64>::new(4, 1.0, 1.0).unwrap();
        assert!(p.clone().with_shift_distribution(ShiftDistribution::Weighted(vec![0.5, 0.5, 0.0, 0.0])).is_ok());
        assert!(p.clone().with_shift_distribution(ShiftDistribution::Weighted(vec![0.5, 0.6, 0.0, 0.0])).is_err());
        assert!(p.with_shift_distribution(ShiftDistribution::Weighted(vec![1.0])).is_err());
    }

    #[test]
    fn noiseless_unshifted_unit_factor_reproduces_signal() {
        let mut rng = rng_from_seed(2);
        let sig: Signal<f64> = generate_signal(6, &mut rng, SignalNormalization::UnitNorm).unwrap();
        let mut delta = vec![0.0; 6];
        delta[0] = 1.0;
        let params = ModelParams::new(6, 1.0, 0.0).unwrap().with_shift_distribution(ShiftDistribution::Weighted(delta)).unwrap();
        let batch = generate_observations_with(&sig, &params, 5, &ConstantFactor(C::new(1.0, 0.0)), &mut rng).unwrap();
        for y in batch.observations() {
            assert_eq!(y, sig.theta());
        }
        for (i, row) in batch.fourier_rows().enumerate() {
            assert!(close(row, &dft(batch.observation(i)), 1e-10));
        }
    }

    #[test]
    fn uniform_shift_counts_concentrate() {
        let l = 16;
        let n = 100_000;
        let mut rng = rng_from_seed(77);
        let sig: Signal<f64> = generate_signal(l, &mut rng, SignalNormalization::UnitPowerSpectrum).unwrap();
        let params = ModelParams::new(l, 1.0, 0.1).unwrap();
        let batch = generate_observations(&sig, &params, n, &mut rng).unwrap();
        let mut counts = vec![0usize; l];
        for t in batch.truth().unwrap() {
            counts[t.shift] += 1;
        }
        let p = 1.0 / l as f64;
        let sd = (n as f64 * p * (1.0 - p)).sqrt();
        for c in counts {
            assert!((c as f64 - n as f64 * p).abs() < 5.0 * sd);
        }
        // M₁ = 0: entrywise mean of ŷ stays within 5 standard errors.
        let bound = 5.0 * ((1.0 + 0.1) / n as f64).sqrt();
        for k in 0..l {
            let mean = batch.fourier_rows().fold(C::default(), |acc, r| acc + r[k]) / n as f64;
            assert!(mean.norm() < bound, "k = {k}: {}", mean.norm());
        }
    }

    #[test]
    fn residual_noise_variance_matches_sigma2() {
        let l = 8;
        let n = 20_000;
        let sigma2 = 0.7;
        let mut rng = rng_from_seed(123);
        let sig: Signal<f64> = generate_signal(l, &mut rng, SignalNormalization::UnitNorm).unwrap();
        let params = ModelParams::new(l, 2.0, sigma2).unwrap();
        let batch = generate_observations(&sig, &params, n, &mut rng).unwrap();
        let truth = batch.truth().unwrap();
        let mut acc = 0.0;
        for (i, y) in batch.observations().enumerate() {
            let a = truth[i].factor;
            let clean = cyclic_shift(&scale(sig.theta(), a), truth[i].shift as i64);
            acc += y.iter().zip(&clean).map(|(u, v)| (u - v).norm_sqr()).sum::<f64>();
        }
        let var = acc / (n * l) as f64;
        assert!((var - sigma2).abs() < 0.1 * sigma2, "variance {var}");
    }

    #[test]
    fn batch_generation_is_deterministic() {
        let make = || {
            let mut rng = rng_from_seed(99);
            let sig: Signal<f64> = generate_signal(8, &mut rng, SignalNormalization::UnitPowerSpectrum).unwrap();
            let params = ModelParams::new(8, 1.0, 0.3).unwrap();
            generate_observations(&sig, &params, 50, &mut rng).unwrap()
        };
        let (a, b) = (make(), make());
        assert_eq!(a.observations_flat(), b.observations_flat());
        assert_eq!(a.truth(), b.truth());
    }
}
