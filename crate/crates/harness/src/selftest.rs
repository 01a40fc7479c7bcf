//! Exact-identity checks run by `mrfa selftest`.

use mrfa_core::metrics::align_error;
use mrfa_core::model::{complex_normal, generate_observations, generate_signal, ModelParams, ObservationBatch, SignalNormalization};
use mrfa_core::moments::cz_trispectrum_identity_check;
use mrfa_core::recover::{alternating_minimization, build_cx_permissive, random_alpha, recover_am, recover_fm, AmConfig};
use mrfa_core::rng::{derive_seed, rng_from_seed};
use mrfa_core::spectral::{estimate_u_family, power_spectrum_estimate};
use mrfa_core::{MrfaError, ObservationBatch64};
use serde::Serialize;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn outcome(name: &'static str, result: Result<(bool, String), MrfaError>) -> CheckOutcome {
    match result {
        Ok((passed, detail)) => CheckOutcome { name, passed, detail },
        Err(e) => CheckOutcome { name, passed: false, detail: format!("error: {e}") },
    }
}

pub fn signal_batch(l: usize, n: usize, lambda: f64, sigma2: f64, seed: u64) -> Result<ObservationBatch64, MrfaError> {
    let signal = generate_signal(l, &mut rng_from_seed(derive_seed(seed, &[0])), SignalNormalization::UnitPowerSpectrum)?;
    let params = ModelParams::new(l, lambda, sigma2)?;
    generate_observations(&signal, &params, n, &mut rng_from_seed(derive_seed(seed, &[1])))
}

/// Observations that are pure `CN(0, σ²)` noise, with no signal component.
pub fn noise_batch(l: usize, n: usize, sigma2: f64, seed: u64) -> Result<ObservationBatch64, MrfaError> {
    let mut rng = rng_from_seed(seed);
    let data = (0..l * n).map(|_| complex_normal(&mut rng, sigma2)).collect();
    ObservationBatch::from_observations(data, ModelParams::new(l, 1.0, sigma2)?)
}

/// Largest `|raw C̃_z^(m) - T̃_y|` over all strides `m`.
pub fn trispectrum_identity(l: usize, n: usize, seed: u64) -> Result<f64, MrfaError> {
    let batch = signal_batch(l, n, 1.0, 0.25, seed)?;
    (1..l).try_fold(0.0f64, |worst, m| Ok(worst.max(cz_trispectrum_identity_check(&batch, m)?)))
}

/// Largest increase of the AM objective between consecutive iterations on
/// the full pipeline for `batch`.
pub fn am_worst_increase(batch: &ObservationBatch64, iterations: usize, seed: u64) -> Result<f64, MrfaError> {
    let sigma2 = batch.params().sigma2;
    let p = power_spectrum_estimate(batch, sigma2);
    let family = estimate_u_family(batch, &p, sigma2)?;
    let (cx, _) = build_cx_permissive(&family)?;
    let config = AmConfig { max_iterations: iterations, relative_tolerance: 0.0, init_seed: seed };
    let out = alternating_minimization(&cx, random_alpha(batch.signal_len(), seed), &config)?;
    Ok(out.objective_trace.windows(2).map(|w| w[1] - w[0]).fold(f64::NEG_INFINITY, f64::max))
}

/// Aligned errors of FM and one-iteration AM on a noiseless batch.
pub fn noiseless_errors(l: usize, n: usize, seed: u64) -> Result<(f64, f64), MrfaError> {
    let signal = generate_signal(l, &mut rng_from_seed(derive_seed(seed, &[0])), SignalNormalization::UnitPowerSpectrum)?;
    let params = ModelParams::new(l, 1.0, 0.0)?;
    let batch = generate_observations(&signal, &params, n, &mut rng_from_seed(derive_seed(seed, &[1])))?;
    let fm = recover_fm(&batch, 0.0)?;
    let am = recover_am(&batch, 0.0, &AmConfig { max_iterations: 1, relative_tolerance: 0.0, init_seed: derive_seed(seed, &[2]) })?;
    Ok((align_error(signal.theta(), &fm.theta_tilde)?.error, align_error(signal.theta(), &am.theta_tilde)?.error))
}

pub fn run_all(seed: u64) -> Vec<CheckOutcome> {
    let tri = trispectrum_identity(8, 100, seed).map(|d| (d <= 1e-10, format!("max deviation {d:e}")));
    let mono = (|| {
        let mut worst = f64::NEG_INFINITY;
        for i in 0..10u64 {
            let s = derive_seed(seed, &[10, i]);
            let batch = if i % 2 == 0 { noise_batch(8, 200, 1.0, s)? } else { signal_batch(8, 200, 1.0, 0.5, s)? };
            worst = worst.max(am_worst_increase(&batch, 50, s)?);
        }
        Ok((worst <= 1e-9, format!("largest objective increase {worst:e}")))
    })();
    let exact = noiseless_errors(16, 64, seed).map(|(fm, am)| (fm <= 1e-6 && am <= 1e-6, format!("FM {fm:e}, AM {am:e}")));
    vec![outcome("trispectrum identity", tri), outcome("AM monotonicity", mono), outcome("noiseless exactness", exact)]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_checks_pass() {
        for c in run_all(3) {
            assert!(c.passed, "{c:?}");
        }
    }

    #[test]
    fn noise_batch_has_requested_shape() {
        let b = noise_batch(5, 7, 2.0, 1).unwrap();
        assert_eq!((b.signal_len(), b.n()), (5, 7));
        assert!(b.truth().is_none());
    }
}
