//! Scaling of the stride-one eigenvector error with sample size and SNR.

use mrfa_core::model::{dft, generate_observations, generate_signal, ModelParams, SignalNormalization};
use mrfa_core::rng::{derive_seed, rng_from_seed};
use mrfa_core::scalar::{inner, norm};
use mrfa_core::spectral::{estimate_u, exact_u, power_spectrum_estimate};

const L: usize = 8;

/// Root-mean-square phase-aligned distance between `ũ^(1)` and `u^(1)/‖u^(1)‖`.
fn rms_u_error(snr: f64, n: usize, trials: u64, seed: u64) -> f64 {
    let signal = generate_signal::<f64, _>(L, &mut rng_from_seed(seed), SignalNormalization::UnitPowerSpectrum).unwrap();
    let u = exact_u(&dft(signal.theta()), 1);
    let params = ModelParams::from_snr(L, snr, 1.0).unwrap();
    let mut acc = 0.0;
    for t in 0..trials {
        let batch =
            generate_observations(&signal, &params, n, &mut rng_from_seed(derive_seed(seed, &[n as u64, snr.to_bits(), t]))).unwrap();
        let p = power_spectrum_estimate(&batch, params.sigma2);
        let est = estimate_u(&batch, 1, &p, params.sigma2).unwrap();
        let overlap = inner(&est.u_tilde, &u).norm() / norm(&u);
        acc += 2.0 - 2.0 * overlap.min(1.0);
    }
    (acc / trials as f64).sqrt()
}

fn slope(xs: &[f64], ys: &[f64]) -> f64 {
    let k = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / k, ys.iter().sum::<f64>() / k);
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

#[test]
fn error_decays_as_inverse_square_root_of_n() {
    let ns = [10_000usize, 40_000, 160_000];
    let errs: Vec<f64> = ns.iter().map(|&n| rms_u_error(0.1, n, 20, 5)).collect();
    let s = slope(&ns.map(|n| (n as f64).log10()), &errs.iter().map(|e| e.log10()).collect::<Vec<_>>());
    assert!((s + 0.5).abs() < 0.1, "slope {s}, errors {errs:?}");
}

#[test]
fn error_grows_as_inverse_square_of_snr_at_low_snr() {
    // Noise-to-signal ratio of the stride products is 1/SNR² + 2/SNR, so the
    // secant slope over the grid is that of its logarithm.
    let snrs = [0.04, 0.06, 0.09];
    let errs: Vec<f64> = snrs.iter().map(|&s| rms_u_error(s, 1_000_000, 8, 6)).collect();
    let xs = snrs.map(f64::log10);
    let s = slope(&xs, &errs.iter().map(|e| e.log10()).collect::<Vec<_>>());
    let ratio = |s: f64| (1.0 / (s * s) + 2.0 / s).log10();
    let expected = slope(&xs, &snrs.map(ratio));
    assert!(expected < -1.8 && expected > -2.0);
    assert!((s - expected).abs() < 0.25, "slope {s} vs {expected}, errors {errs:?}");
}
