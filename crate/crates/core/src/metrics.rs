//! Error up to the model's ambiguities: cyclic shift and global phase.

use num_complex::Complex;

use crate::error::{MrfaError, Result};
use crate::model::cyclic_shift;
use crate::scalar::{cone, inner, lit, modulus, Real};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlignmentReport<T: Real> {
    /// `min_{s, |α|=1} ‖θ − α R_s θ̃‖₂`.
    pub error: T,
    pub best_shift: usize,
    pub best_phase: Complex<T>,
}

/// Unit phase `α` minimizing `‖a − α b‖`, i.e. the phase of `b* a`.
/// Returns `1` when `|b* a| < 1e-14`.
pub fn optimal_phase<T: Real>(a: &[Complex<T>], b: &[Complex<T>]) -> Complex<T> {
    let c = inner(b, a);
    let r = modulus(c);
    if r < lit(1e-14) {
        cone()
    } else {
        c.unscale(r)
    }
}

fn distance<T: Real>(a: &[Complex<T>], b: &[Complex<T>], phase: Complex<T>) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (x, y)| acc + (x - phase * y).norm_sqr()).sqrt()
}

/// Exhaustive search over shifts; ties keep the smallest shift.
pub fn align_error<T: Real>(theta: &[Complex<T>], theta_tilde: &[Complex<T>]) -> Result<AlignmentReport<T>> {
    let l = theta.len();
    if theta_tilde.len() != l {
        return Err(MrfaError::LengthMismatch { expected: l, actual: theta_tilde.len() });
    }
    if l == 0 {
        return Err(MrfaError::InvalidParameter("empty signal".into()));
    }
    let mut best: Option<AlignmentReport<T>> = None;
    for s in 0..l {
        let shifted = cyclic_shift(theta_tilde, s as i64);
        let phase = optimal_phase(theta, &shifted);
        let error = distance(theta, &shifted, phase);
        if best.as_ref().is_none_or(|b| error < b.error) {
            best = Some(AlignmentReport { error, best_shift: s, best_phase: phase });
        }
    }
    Ok(best.expect("l > 0"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{complex_normal, generate_signal, SignalNormalization};
    use crate::rng::rng_from_seed;
    use crate::scalar::norm;
    use proptest::prelude::*;

    type C = Complex<f64>;

    fn random_vec(l: usize, seed: u64) -> Vec<C> {
        let mut rng = rng_from_seed(seed);
        let v: Vec<C> = (0..l).map(|_| complex_normal(&mut rng, 1.0)).collect();
        let n = norm(&v);
        v.into_iter().map(|z| z / n).collect()
    }

    fn brute_force(theta: &[C], tilde: &[C], grid: usize) -> f64 {
        let mut best = f64::INFINITY;
        for s in 0..theta.len() {
            let shifted = cyclic_shift(tilde, s as i64);
            for j in 0..grid {
                let phase = C::from_polar(1.0, std::f64::consts::TAU * j as f64 / grid as f64);
                best = best.min(distance(theta, &shifted, phase));
            }
        }
        best
    }

    #[test]
    fn optimal_phase_examples() {
        let a = [C::new(1.0, 0.0), C::new(0.0, 0.0)];
        let b = [C::new(0.0, 1.0), C::new(0.0, 0.0)];
        assert!((optimal_phase(&a, &b) - C::new(0.0, -1.0)).norm() < 1e-15);
        let c = [C::new(0.0, 0.0), C::new(1.0, 0.0)];
        assert_eq!(optimal_phase(&a, &c), C::new(1.0, 0.0));
        let v = random_vec(5, 1);
        let rotated: Vec<C> = v.iter().map(|z| z * C::from_polar(1.0, 0.7)).collect();
        assert!((optimal_phase(&v, &rotated) - C::from_polar(1.0, -0.7)).norm() < 1e-12);
    }

    #[test]
    fn align_error_examples() {
        let theta = random_vec(7, 2);
        let r = align_error(&theta, &theta).unwrap();
        assert!(r.error < 1e-15);
        assert_eq!(r.best_shift, 0);
        assert!((r.best_phase - C::new(1.0, 0.0)).norm() < 1e-15);

        for (phi, s) in [(0.4, 3i64), (-2.5, 6), (3.0, -1)] {
            let tilde: Vec<C> = cyclic_shift(&theta, s).into_iter().map(|z| z * C::from_polar(1.0, phi)).collect();
            assert!(align_error(&theta, &tilde).unwrap().error <= 1e-12);
        }

        let h = std::f64::consts::FRAC_1_SQRT_2;
        let r = align_error(&[C::new(1.0, 0.0), C::new(0.0, 0.0)], &[C::new(h, 0.0), C::new(h, 0.0)]).unwrap();
        assert!((r.error - (2.0 - 2f64.sqrt()).sqrt()).abs() < 1e-12);
        assert_eq!(r.best_shift, 0);
    }

    #[test]
    fn report_components_reproduce_error() {
        let theta = random_vec(9, 3);
        let tilde = random_vec(9, 4);
        let r = align_error(&theta, &tilde).unwrap();
        let shifted = cyclic_shift(&tilde, r.best_shift as i64);
        assert!((distance(&theta, &shifted, r.best_phase) - r.error).abs() < 1e-12);
    }

    #[test]
    fn length_mismatch_is_rejected() {
        let a = random_vec(3, 5);
        let b = random_vec(4, 6);
        assert!(matches!(align_error(&a, &b), Err(MrfaError::LengthMismatch { .. })));
    }

    #[test]
    fn matches_brute_force_grid() {
        let grid = 3600;
        let bound = std::f64::consts::TAU / grid as f64;
        for (i, l) in [2usize, 5, 16].into_iter().enumerate() {
            for t in 0..10 {
                let theta = random_vec(l, 100 + 31 * i as u64 + t);
                let tilde = random_vec(l, 900 + 31 * i as u64 + t);
                let exact = align_error(&theta, &tilde).unwrap().error;
                let brute = brute_force(&theta, &tilde, grid);
                assert!(exact <= brute + 1e-12);
                assert!(brute - exact <= bound * norm(&tilde), "L = {l}");
            }
        }
    }

    #[test]
    fn works_in_single_precision() {
        let sig = generate_signal::<f32, _>(8, &mut rng_from_seed(7), SignalNormalization::UnitNorm).unwrap();
        let tilde = cyclic_shift(sig.theta(), 5);
        assert!(align_error(sig.theta(), &tilde).unwrap().error < 1e-5);
    }

    proptest! {
        #[test]
        fn invariant_under_model_actions(seed in 0u64..10_000, l in 2usize..12, s in -20i64..20, phi in -3.2f64..3.2) {
            let theta = random_vec(l, seed);
            let tilde = random_vec(l, seed.wrapping_add(77_777));
            let base = align_error(&theta, &tilde).unwrap().error;
            let moved: Vec<C> = cyclic_shift(&tilde, s).into_iter().map(|z| z * C::from_polar(1.0, phi)).collect();
            let other = align_error(&theta, &moved).unwrap().error;
            prop_assert!((base - other).abs() < 1e-12);
            prop_assert!(base <= distance(&theta, &tilde, C::new(1.0, 0.0)) + 1e-15);
            prop_assert!(base <= 2.0 + 1e-12);
        }
    }
}
