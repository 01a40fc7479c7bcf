//! Scalar abstraction shared by every numerical routine.

use nalgebra::{ComplexField, RealField};
use num_complex::Complex;
use num_traits::ToPrimitive;

/// Real floating-point scalar: `f32` or `f64`.
pub trait Real: RealField + Copy + rustfft::FftNum + ToPrimitive {}

impl Real for f32 {}
impl Real for f64 {}

/// Converts an `f64` literal into `T`.
#[inline]
pub fn lit<T: Real>(x: f64) -> T {
    T::from_f64(x).expect("f64 literal representable in scalar type")
}

#[inline]
pub fn to_f64<T: Real>(x: T) -> f64 {
    x.to_f64().expect("scalar converts to f64")
}

/// `e^{iφ}`.
#[inline]
pub fn cis<T: Real>(phi: T) -> Complex<T> {
    Complex::new(phi.cos(), phi.sin())
}

#[inline]
pub fn czero<T: Real>() -> Complex<T> {
    Complex::new(T::zero(), T::zero())
}

#[inline]
pub fn cone<T: Real>() -> Complex<T> {
    Complex::new(T::one(), T::zero())
}

#[inline]
pub fn creal<T: Real>(x: T) -> Complex<T> {
    Complex::new(x, T::zero())
}

/// Principal argument in `(-π, π]`.
#[inline]
pub fn arg<T: Real>(z: Complex<T>) -> T {
    z.argument()
}

#[inline]
pub fn modulus<T: Real>(z: Complex<T>) -> T {
    z.modulus()
}

/// Maps an angle into `[0, 2π)`.
pub fn wrap_two_pi<T: Real>(phi: T) -> T {
    let two_pi = T::two_pi();
    let mut r = phi % two_pi;
    if r < T::zero() {
        r += two_pi;
    }
    if r >= two_pi {
        r -= two_pi;
    }
    r
}

pub fn norm<T: Real>(v: &[Complex<T>]) -> T {
    v.iter().fold(T::zero(), |acc, z| acc + z.norm_sqr()).sqrt()
}

/// `Σ conj(a[i]) b[i]`.
pub fn inner<T: Real>(a: &[Complex<T>], b: &[Complex<T>]) -> Complex<T> {
    a.iter().zip(b).fold(czero(), |acc, (x, y)| acc + x.conj() * y)
}

pub fn scale<T: Real>(v: &[Complex<T>], s: Complex<T>) -> Vec<Complex<T>> {
    v.iter().map(|z| z * s).collect()
}

/// Casts a complex vector between scalar types.
pub fn cast_vec<S: Real, T: Real>(v: &[Complex<S>]) -> Vec<Complex<T>> {
    v.iter().map(|z| Complex::new(lit(to_f64(z.re)), lit(to_f64(z.im)))).collect()
}
