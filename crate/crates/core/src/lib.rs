//! Rank-one multi-reference factor analysis.
//!
//! Observations are modelled as `y = R_s{a θ} + η`: an unknown unit-norm
//! complex signal `θ`, scaled by a random complex factor `a ~ CN(0, λ)`,
//! cyclically shifted by a random `s`, and corrupted by white complex
//! Gaussian noise of variance `σ²`. The crate provides
//!
//! * [`model`]: the generative model, the unitary DFT and cyclic shifts,
//! * [`spectral`]: power-spectrum and stride-covariance estimators,
//! * [`recover`]: frequency marching (FM) and alternating minimization (AM),
//! * [`em`]: an expectation-maximization baseline,
//! * [`moments`]: shift-invariant moments (bispectrum, trispectrum),
//! * [`metrics`]: the shift-and-phase aligned error.
//!
//! All numerical code is generic over [`Real`] (`f32` or `f64`). The `*64`
//! aliases below fix the scalar to `f64`, which is what the experiment
//! harness uses.

pub mod em;
pub mod error;
pub mod io;
pub mod linalg;
pub mod metrics;
pub mod model;
pub mod moments;
pub mod recover;
pub mod rng;
pub mod scalar;
pub mod spectral;

pub use error::{Flag, MrfaError, Result};
pub use scalar::Real;

pub use num_complex::Complex;

pub type Signal64 = model::Signal<f64>;
pub type Signal32 = model::Signal<f32>;
pub type ModelParams64 = model::ModelParams<f64>;
pub type ObservationBatch64 = model::ObservationBatch<f64>;
pub type ObservationBatch32 = model::ObservationBatch<f32>;
pub type PowerSpectrumEstimate64 = spectral::PowerSpectrumEstimate<f64>;
pub type StrideCovariance64 = spectral::StrideCovariance<f64>;
pub type UEstimate64 = spectral::UEstimate<f64>;
pub type RecoveryResult64 = recover::RecoveryResult<f64>;
pub type AlignmentReport64 = metrics::AlignmentReport<f64>;
pub type EmState64 = em::EmState<f64>;
pub type TrispectrumEstimate64 = moments::TrispectrumEstimate<f64>;
pub type C64 = Complex<f64>;
pub type C32 = Complex<f32>;
