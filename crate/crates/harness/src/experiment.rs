//! Grids of Monte Carlo trials.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use mrfa_core::em::{run_em, EStepConvention, EmConfig, EmInit};
use mrfa_core::metrics::align_error;
use mrfa_core::model::{generate_observations, generate_signal, ModelParams, SignalNormalization};
use mrfa_core::recover::{recover_am, recover_fm, AmConfig};
use mrfa_core::rng::{derive_seed, rng_from_seed};
use mrfa_core::{MrfaError, C64};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Error recorded for a trial whose algorithm failed.
pub const FAILED_TRIAL_ERROR: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AlgorithmChoice {
    #[serde(rename = "FM")]
    Fm,
    #[serde(rename = "AM")]
    Am,
    #[serde(rename = "EM-oracle")]
    EmOracle,
    #[serde(rename = "EM-random")]
    EmRandom,
}

impl AlgorithmChoice {
    pub const ALL: [AlgorithmChoice; 4] = [AlgorithmChoice::Fm, AlgorithmChoice::Am, AlgorithmChoice::EmOracle, AlgorithmChoice::EmRandom];

    pub fn name(self) -> &'static str {
        match self {
            AlgorithmChoice::Fm => "FM",
            AlgorithmChoice::Am => "AM",
            AlgorithmChoice::EmOracle => "EM-oracle",
            AlgorithmChoice::EmRandom => "EM-random",
        }
    }
}

impl fmt::Display for AlgorithmChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AlgorithmChoice {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "fm" => Ok(AlgorithmChoice::Fm),
            "am" => Ok(AlgorithmChoice::Am),
            "em-oracle" | "emoracle" => Ok(AlgorithmChoice::EmOracle),
            "em-random" | "emrandom" | "em" => Ok(AlgorithmChoice::EmRandom),
            other => Err(format!("unknown algorithm '{other}' (expected fm, am, em-oracle, em-random)")),
        }
    }
}

/// Per-algorithm settings shared by every trial of a run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialOptions {
    /// AM iteration budget `τ`.
    pub tau: usize,
    /// AM relative tolerance.
    pub tol: f64,
    pub em: EmConfig,
    /// Keep `θ̃` in the record (for `--dump-estimates`).
    pub keep_estimate: bool,
}

impl Default for TrialOptions {
    fn default() -> Self {
        TrialOptions { tau: 100, tol: 1e-8, em: EmConfig::default(), keep_estimate: false }
    }
}

impl TrialOptions {
    pub fn with_em_convention(mut self, convention: EStepConvention) -> Self {
        self.em.convention = convention;
        self
    }
}

/// A point of the grid without the algorithm: everything that determines the
/// simulated data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DataCell {
    pub l: usize,
    pub snr: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentGrid {
    pub l_values: Vec<usize>,
    pub snr_values: Vec<f64>,
    pub n_values: Vec<usize>,
    pub trials_per_cell: usize,
    pub algorithms: Vec<AlgorithmChoice>,
    pub master_seed: u64,
    pub lambda: f64,
}

impl ExperimentGrid {
    pub fn validate(&self) -> Result<(), String> {
        if self.l_values.is_empty() || self.snr_values.is_empty() || self.n_values.is_empty() || self.algorithms.is_empty() {
            return Err("grid lists must be nonempty".into());
        }
        if self.trials_per_cell == 0 {
            return Err("trials per cell must be at least 1".into());
        }
        if let Some(l) = self.l_values.iter().find(|&&l| l < 2) {
            return Err(format!("signal length must be at least 2, got {l}"));
        }
        if let Some(s) = self.snr_values.iter().find(|&&s| !(s > 0.0 && s.is_finite())) {
            return Err(format!("SNR values must be positive and finite, got {s}"));
        }
        if self.n_values.contains(&0) {
            return Err("N values must be positive".into());
        }
        if !(self.lambda > 0.0) {
            return Err("lambda must be positive".into());
        }
        Ok(())
    }

    /// Data cells in output order: `L`, then SNR, then `N`.
    pub fn data_cells(&self) -> Vec<DataCell> {
        let mut out = Vec::new();
        for &l in &self.l_values {
            for &snr in &self.snr_values {
                for &n in &self.n_values {
                    out.push(DataCell { l, snr, n });
                }
            }
        }
        out
    }

    pub fn trial_count(&self) -> usize {
        self.data_cells().len() * self.trials_per_cell * self.algorithms.len()
    }
}

/// `n` points log-spaced between `lo` and `hi` inclusive.
pub fn log_space(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.log10(), hi.log10());
    (0..n).map(|i| 10f64.powf(a + (b - a) * i as f64 / (n - 1) as f64)).collect()
}

/// Rounded log-spaced sample sizes.
pub fn log_space_n(lo: f64, hi: f64, n: usize) -> Vec<usize> {
    log_space(lo, hi, n).into_iter().map(|x| x.round().max(1.0) as usize).collect()
}

/// Seed of one trial. Independent of the algorithm, so algorithms in the same
/// cell see identical data.
pub fn trial_seed(master_seed: u64, cell: &DataCell, trial: usize) -> u64 {
    derive_seed(master_seed, &[cell.l as u64, cell.snr.to_bits(), cell.n as u64, trial as u64])
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub l: usize,
    pub snr: f64,
    pub n: usize,
    pub algorithm: AlgorithmChoice,
    pub trial: usize,
    pub seed: u64,
    pub error: f64,
    pub runtime_ms: f64,
    pub flags: Vec<String>,
    pub estimate: Option<Vec<C64>>,
    /// Ground-truth signal, kept alongside `estimate`.
    pub truth: Option<Vec<C64>>,
}

fn run_algorithm(
    algorithm: AlgorithmChoice,
    batch: &mrfa_core::ObservationBatch64,
    theta: &[C64],
    lambda: f64,
    seed: u64,
    options: &TrialOptions,
) -> Result<mrfa_core::RecoveryResult64, MrfaError> {
    let sigma2 = batch.params().sigma2;
    match algorithm {
        AlgorithmChoice::Fm => recover_fm(batch, sigma2),
        AlgorithmChoice::Am => {
            let config = AmConfig { max_iterations: options.tau, relative_tolerance: options.tol, init_seed: derive_seed(seed, &[2]) };
            recover_am(batch, sigma2, &config)
        }
        AlgorithmChoice::EmOracle => {
            let init = EmInit::Oracle { theta: theta.to_vec(), lambda };
            run_em(batch, &init, sigma2, &options.em).map(|r| r.result)
        }
        AlgorithmChoice::EmRandom => {
            let init = EmInit::Random { seed: derive_seed(seed, &[3]) };
            run_em(batch, &init, sigma2, &options.em).map(|r| r.result)
        }
    }
}

/// Simulates one trial's data and runs each of `algorithms` on it.
pub fn run_paired_trial(
    cell: &DataCell,
    trial: usize,
    master_seed: u64,
    lambda: f64,
    algorithms: &[AlgorithmChoice],
    options: &TrialOptions,
) -> Vec<TrialRecord> {
    let seed = trial_seed(master_seed, cell, trial);
    let record = |algorithm, error, runtime_ms, flags, estimate: Option<Vec<C64>>, truth: Option<Vec<C64>>| TrialRecord {
        l: cell.l,
        snr: cell.snr,
        n: cell.n,
        algorithm,
        trial,
        seed,
        error,
        runtime_ms,
        flags,
        estimate,
        truth,
    };
    let setup = (|| {
        let params = ModelParams::from_snr(cell.l, cell.snr, lambda)?;
        let signal = generate_signal(cell.l, &mut rng_from_seed(derive_seed(seed, &[0])), SignalNormalization::UnitPowerSpectrum)?;
        let batch = generate_observations(&signal, &params, cell.n, &mut rng_from_seed(derive_seed(seed, &[1])))?;
        Ok::<_, MrfaError>((signal, batch))
    })();
    let (signal, batch) = match setup {
        Ok(v) => v,
        Err(e) => {
            return algorithms.iter().map(|&a| record(a, FAILED_TRIAL_ERROR, 0.0, vec![format!("setup_error: {e}")], None, None)).collect()
        }
    };
    algorithms
        .iter()
        .map(|&algorithm| {
            let start = Instant::now();
            let outcome = run_algorithm(algorithm, &batch, signal.theta(), lambda, seed, options);
            let runtime_ms = start.elapsed().as_secs_f64() * 1e3;
            let truth = options.keep_estimate.then(|| signal.theta().to_vec());
            match outcome.and_then(|r| align_error(signal.theta(), &r.theta_tilde).map(|a| (r, a))) {
                Ok((r, a)) => {
                    let flags = r.flags.iter().map(|f| f.to_string()).collect();
                    let estimate = options.keep_estimate.then_some(r.theta_tilde);
                    record(algorithm, a.error, runtime_ms, flags, estimate, truth)
                }
                Err(e) => record(algorithm, FAILED_TRIAL_ERROR, runtime_ms, vec![format!("error: {e}")], None, truth),
            }
        })
        .collect()
}

/// Single-algorithm convenience wrapper around [`run_paired_trial`].
pub fn run_trial(
    cell: &DataCell,
    algorithm: AlgorithmChoice,
    trial: usize,
    master_seed: u64,
    lambda: f64,
    options: &TrialOptions,
) -> TrialRecord {
    run_paired_trial(cell, trial, master_seed, lambda, &[algorithm], options).remove(0)
}

/// Runs every trial of `cells` on a pool of `threads` workers. Records come
/// back ordered by cell, algorithm (grid order), then trial, whatever the
/// thread count.
pub fn run_cells(cells: &[DataCell], grid: &ExperimentGrid, options: &TrialOptions, threads: usize) -> Result<Vec<TrialRecord>, String> {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads.max(1)).build().map_err(|e| e.to_string())?;
    let jobs: Vec<(usize, usize)> = (0..cells.len()).flat_map(|c| (0..grid.trials_per_cell).map(move |t| (c, t))).collect();
    let per_job: Vec<Vec<TrialRecord>> = pool.install(|| {
        jobs.par_iter().map(|&(c, t)| run_paired_trial(&cells[c], t, grid.master_seed, grid.lambda, &grid.algorithms, options)).collect()
    });
    let mut out = Vec::with_capacity(per_job.len() * grid.algorithms.len());
    for c in 0..cells.len() {
        for a in 0..grid.algorithms.len() {
            for t in 0..grid.trials_per_cell {
                out.push(per_job[c * grid.trials_per_cell + t][a].clone());
            }
        }
    }
    Ok(out)
}

pub fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.sort_by(f64::total_cmp);
    let m = values.len() / 2;
    if values.len() % 2 == 1 {
        values[m]
    } else {
        0.5 * (values[m - 1] + values[m])
    }
}
