use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Result<T> = std::result::Result<T, MrfaError>;

#[derive(Debug, Error)]
pub enum MrfaError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("degenerate phase: entry {index} has modulus {modulus:e}, argument undefined")]
    DegeneratePhase { index: usize, modulus: f64 },
    #[error("power spectrum estimate is identically zero")]
    AllZeroSpectrum,
    #[error("matrix is not Hermitian (max asymmetry {0:e})")]
    NotHermitian(f64),
    #[error("eigendecomposition failed to converge")]
    EigenFailure,
    #[error("E-step undefined for zero noise variance")]
    ZeroNoiseVariance,
    #[error("trispectrum of length {0} exceeds the L <= 64 storage guard; pass force to override")]
    TrispectrumTooLarge(usize),
    #[error("insufficient threshold crossings: {found} rows cross, need {needed}")]
    InsufficientCrossings { found: usize, needed: usize },
    #[error("malformed input: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Non-fatal conditions recorded alongside a result.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Flag {
    /// Top two eigenvalues of the stride-`m` covariance nearly coincide.
    DegenerateGap { m: usize },
    /// The AM q-step matrix had a near-degenerate leading eigenvalue.
    DegenerateQGap { iteration: usize },
    /// The AM α-step sum for lag `k` vanished; α[k] was set to 1.
    AlphaZeroSum { k: usize },
    /// A zero entry in ũ was replaced by 1 while forming C̃_x.
    CxZeroEntry { m: usize, k: usize },
    /// The EM M-step eigenvalue fell below σ² and λ was clamped.
    LambdaFloor { iteration: usize },
    /// The EM M-step covariance had a near-degenerate leading eigenvalue.
    EmDegenerateGap { iteration: usize },
}

impl fmt::Display for Flag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Flag::DegenerateGap { m } => write!(f, "degenerate_gap(m={m})"),
            Flag::DegenerateQGap { iteration } => write!(f, "degenerate_q_gap(t={iteration})"),
            Flag::AlphaZeroSum { k } => write!(f, "alpha_zero_sum(k={k})"),
            Flag::CxZeroEntry { m, k } => write!(f, "cx_zero_entry(m={m},k={k})"),
            Flag::LambdaFloor { iteration } => write!(f, "lambda_floor(it={iteration})"),
            Flag::EmDegenerateGap { iteration } => write!(f, "em_degenerate_gap(it={iteration})"),
        }
    }
}
