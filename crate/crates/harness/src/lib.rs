//! Monte Carlo experiments for rank-one multi-reference factor analysis:
//! heat maps over `(N, SNR)`, transition fits and algorithm comparisons.

pub mod config;
pub mod experiment;
pub mod report;
pub mod selftest;
pub mod transition;
