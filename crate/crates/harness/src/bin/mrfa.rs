use std::fs::{self, File};
use std::io::BufReader;
use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use mrfa_core::em::{run_em, EStepConvention, EmInit};
use mrfa_core::io::{
    read_batch_csv, read_metadata, read_signal_csv, recovery_result_json, write_batch_csv, write_metadata, write_signal_csv,
    write_truth_csv, BatchMetadata,
};
use mrfa_core::metrics::align_error;
use mrfa_core::model::{generate_observations, generate_signal, ModelParams, SignalNormalization};
use mrfa_core::recover::{recover_am, recover_fm, AmConfig};
use mrfa_core::rng::{derive_seed, rng_from_seed};
use mrfa_harness::config::ConfigFile;
use mrfa_harness::experiment::{log_space, log_space_n, run_cells, AlgorithmChoice, ExperimentGrid, TrialOptions};
use mrfa_harness::report::{heatmap, read_summary, write_compare, OutputOptions, SUMMARY_FILE};
use mrfa_harness::selftest;
use mrfa_harness::transition::{overlay_fraction, reference_line, transition_fit};

#[derive(Parser)]
#[command(name = "mrfa", version, about = "Rank-one multi-reference factor analysis: simulation, recovery and Monte Carlo experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one batch and write it to --out.
    Simulate(Common),
    /// Read a batch directory and run one algorithm on it.
    Recover(Common),
    /// Run a grid of trials over (N, SNR) and write trials.csv and summary.json.
    Heatmap(Common),
    /// Fit the phase-transition line from a heat-map summary.
    Transition(Common),
    /// Sweep SNR or N and tabulate error and runtime per algorithm.
    Compare(Common),
    /// Run the exact-identity checks.
    Selftest(Common),
}

#[derive(Args, Debug, Default)]
struct Common {
    /// Signal length(s).
    #[arg(long = "L", value_delimiter = ',')]
    l: Option<Vec<usize>>,
    /// SNR value(s).
    #[arg(long, value_delimiter = ',')]
    snr: Option<Vec<f64>>,
    /// Factor variance.
    #[arg(long)]
    lambda: Option<f64>,
    /// Sample size(s).
    #[arg(long, value_delimiter = ',')]
    n: Option<Vec<usize>>,
    /// Trials per cell.
    #[arg(long)]
    trials: Option<usize>,
    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Algorithm(s): fm, am, em-oracle, em-random.
    #[arg(long, value_delimiter = ',')]
    alg: Option<Vec<String>>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// AM iteration budget.
    #[arg(long)]
    tau: Option<usize>,
    /// AM relative tolerance.
    #[arg(long)]
    tol: Option<f64>,
    /// Worker threads.
    #[arg(long)]
    threads: Option<usize>,
    /// key=value file with defaults for these flags.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Leave runtime_ms empty so outputs are byte-reproducible.
    #[arg(long)]
    omit_runtime: bool,
    /// Also write estimates.jsonl with every θ̃.
    #[arg(long)]
    dump_estimates: bool,
    /// EM E-step exponent: printed or complex-gaussian.
    #[arg(long)]
    em_convention: Option<String>,
    /// Largest signal length accepted.
    #[arg(long)]
    max_l: Option<usize>,
    /// Noise variance; overrides --snr (simulate).
    #[arg(long)]
    sigma2: Option<f64>,
    /// Input batch directory (recover) or summary file or directory (transition).
    #[arg(long)]
    input: Option<PathBuf>,
    /// Error threshold defining the transition.
    #[arg(long)]
    threshold: Option<f64>,
    /// Median-error band for the line overlay, as lo,hi.
    #[arg(long, value_delimiter = ',')]
    band: Option<Vec<f64>>,
    /// Swept axis for compare: snr or n.
    #[arg(long)]
    axis: Option<String>,
}

enum Failure {
    Usage(anyhow::Error),
    Experiment(anyhow::Error),
}

type Outcome<T> = Result<T, Failure>;

fn usage<E: Into<anyhow::Error>>(e: E) -> Failure {
    Failure::Usage(e.into())
}

fn failed<E: Into<anyhow::Error>>(e: E) -> Failure {
    Failure::Experiment(e.into())
}

/// Flags merged with the config file; command-line values win.
struct Settings {
    cli: Common,
    file: ConfigFile,
}

impl Settings {
    fn new(cli: Common) -> Outcome<Self> {
        let file = match &cli.config {
            Some(p) => ConfigFile::load(p).map_err(usage)?,
            None => ConfigFile::default(),
        };
        Ok(Settings { cli, file })
    }

    fn one<T: FromStr>(&self, cli: Option<T>, key: &str) -> Outcome<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        match cli {
            Some(v) => Ok(Some(v)),
            None => self.file.get(key).map_err(usage),
        }
    }

    fn list<T: FromStr + Clone>(&self, cli: &Option<Vec<T>>, key: &str) -> Outcome<Option<Vec<T>>>
    where
        T::Err: std::fmt::Display,
    {
        match cli {
            Some(v) => Ok(Some(v.clone())),
            None => self.file.get_list(key).map_err(usage),
        }
    }

    fn flag(&self, cli: bool, key: &str) -> Outcome<bool> {
        Ok(cli || self.file.get::<bool>(key).map_err(usage)?.unwrap_or(false))
    }

    fn l_values(&self, default: Vec<usize>) -> Outcome<Vec<usize>> {
        let ls = self.list(&self.cli.l, "L")?.unwrap_or(default);
        let max_l = self.one(self.cli.max_l, "max-l")?.unwrap_or(128);
        if let Some(l) = ls.iter().find(|&&l| l > max_l) {
            return Err(usage(anyhow!("L = {l} exceeds --max-l {max_l}")));
        }
        Ok(ls)
    }

    fn single<T: Copy>(values: Vec<T>, name: &str) -> Outcome<T> {
        match values.as_slice() {
            [v] => Ok(*v),
            _ => Err(usage(anyhow!("--{name} takes a single value here"))),
        }
    }

    fn seed(&self) -> Outcome<u64> {
        Ok(self.one(self.cli.seed, "seed")?.unwrap_or(0))
    }

    fn lambda(&self) -> Outcome<f64> {
        Ok(self.one(self.cli.lambda, "lambda")?.unwrap_or(1.0))
    }

    fn out(&self, default: &str) -> Outcome<PathBuf> {
        Ok(self.one(self.cli.out.clone(), "out")?.unwrap_or_else(|| PathBuf::from(default)))
    }

    fn algorithms(&self, default: &[AlgorithmChoice]) -> Outcome<Vec<AlgorithmChoice>> {
        match self.list(&self.cli.alg, "alg")? {
            Some(names) => names.iter().map(|s| s.parse::<AlgorithmChoice>().map_err(|e| usage(anyhow!(e)))).collect(),
            None => Ok(default.to_vec()),
        }
    }

    fn trial_options(&self) -> Outcome<TrialOptions> {
        let base = TrialOptions::default();
        let convention = match self.one(self.cli.em_convention.clone(), "em-convention")?.as_deref() {
            None | Some("printed") => EStepConvention::Printed,
            Some("complex-gaussian") => EStepConvention::ComplexGaussian,
            Some(other) => return Err(usage(anyhow!("unknown EM convention '{other}' (printed, complex-gaussian)"))),
        };
        let options = TrialOptions {
            tau: self.one(self.cli.tau, "tau")?.unwrap_or(base.tau),
            tol: self.one(self.cli.tol, "tol")?.unwrap_or(base.tol),
            ..base
        }
        .with_em_convention(convention);
        if options.tau == 0 {
            return Err(usage(anyhow!("--tau must be at least 1")));
        }
        Ok(options)
    }

    fn threads(&self) -> Outcome<usize> {
        let default = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
        Ok(self.one(self.cli.threads, "threads")?.unwrap_or(default).max(1))
    }

    fn output_options(&self) -> Outcome<OutputOptions> {
        Ok(OutputOptions {
            omit_runtime: self.flag(self.cli.omit_runtime, "omit-runtime")?,
            dump_estimates: self.flag(self.cli.dump_estimates, "dump-estimates")?,
        })
    }

    fn grid(&self, algorithms: &[AlgorithmChoice]) -> Outcome<ExperimentGrid> {
        let grid = ExperimentGrid {
            l_values: self.l_values(vec![16])?,
            snr_values: self.list(&self.cli.snr, "snr")?.unwrap_or_else(|| log_space(1e-2, 1.0, 8)),
            n_values: self.list(&self.cli.n, "n")?.unwrap_or_else(|| log_space_n(10.0, 1e5, 8)),
            trials_per_cell: self.one(self.cli.trials, "trials")?.unwrap_or(25),
            algorithms: self.algorithms(algorithms)?,
            master_seed: self.seed()?,
            lambda: self.lambda()?,
        };
        grid.validate().map_err(|e| usage(anyhow!(e)))?;
        Ok(grid)
    }
}

fn simulate(s: &Settings) -> Outcome<()> {
    let l = Settings::single(s.l_values(vec![16])?, "L")?;
    let n = Settings::single(s.list(&s.cli.n, "n")?.unwrap_or(vec![1000]), "n")?;
    let lambda = s.lambda()?;
    let seed = s.seed()?;
    let params = match s.one(s.cli.sigma2, "sigma2")? {
        Some(sigma2) => ModelParams::new(l, lambda, sigma2),
        None => ModelParams::from_snr(l, Settings::single(s.list(&s.cli.snr, "snr")?.unwrap_or(vec![1.0]), "snr")?, lambda),
    }
    .map_err(usage)?;
    let out = s.out("batch")?;
    let signal = generate_signal(l, &mut rng_from_seed(derive_seed(seed, &[0])), SignalNormalization::UnitPowerSpectrum).map_err(failed)?;
    let batch = generate_observations(&signal, &params, n, &mut rng_from_seed(derive_seed(seed, &[1]))).map_err(failed)?;
    let write = || -> anyhow::Result<()> {
        fs::create_dir_all(&out)?;
        write_signal_csv(signal.theta(), File::create(out.join("signal.csv"))?)?;
        write_batch_csv(&batch, File::create(out.join("batch.csv"))?)?;
        write_truth_csv(batch.truth().unwrap_or(&[]), File::create(out.join("truth.csv"))?)?;
        let meta = BatchMetadata { l, n, lambda: params.lambda, sigma2: params.sigma2, seed: Some(seed) };
        write_metadata(&meta, File::create(out.join("metadata.json"))?)?;
        Ok(())
    };
    write().with_context(|| format!("writing batch to {}", out.display())).map_err(failed)?;
    println!("{}", json!({ "out": out, "L": l, "N": n, "sigma2": params.sigma2, "lambda": params.lambda, "seed": seed }));
    Ok(())
}

fn recover(s: &Settings) -> Outcome<()> {
    let dir = s.one(s.cli.input.clone(), "input")?.ok_or_else(|| usage(anyhow!("recover needs --input <batch dir>")))?;
    let algorithm = Settings::single(s.algorithms(&[AlgorithmChoice::Fm])?, "alg")?;
    let options = s.trial_options()?;
    let seed = s.seed()?;
    let open = |name: &str| File::open(dir.join(name)).map(BufReader::new).with_context(|| format!("opening {}", dir.join(name).display()));
    let meta = read_metadata(open("metadata.json").map_err(usage)?).map_err(usage)?;
    let batch = read_batch_csv(open("batch.csv").map_err(usage)?, meta.params().map_err(usage)?).map_err(usage)?;
    let truth: Option<Vec<_>> = match open("signal.csv") {
        Ok(f) => Some(read_signal_csv(f).map_err(usage)?),
        Err(_) => None,
    };
    let sigma2 = meta.sigma2;
    let result = match algorithm {
        AlgorithmChoice::Fm => recover_fm(&batch, sigma2),
        AlgorithmChoice::Am => recover_am(
            &batch,
            sigma2,
            &AmConfig { max_iterations: options.tau, relative_tolerance: options.tol, init_seed: derive_seed(seed, &[2]) },
        ),
        AlgorithmChoice::EmOracle => {
            let theta = truth.clone().ok_or_else(|| usage(anyhow!("em-oracle needs signal.csv in the batch directory")))?;
            run_em(&batch, &EmInit::Oracle { theta, lambda: meta.lambda }, sigma2, &options.em).map(|r| r.result)
        }
        AlgorithmChoice::EmRandom => {
            run_em(&batch, &EmInit::Random { seed: derive_seed(seed, &[3]) }, sigma2, &options.em).map(|r| r.result)
        }
    }
    .map_err(failed)?;
    let mut report = recovery_result_json(&result);
    if let Some(theta) = &truth {
        let a = align_error(theta, &result.theta_tilde).map_err(failed)?;
        report["aligned_error"] = json!(a.error);
        report["best_shift"] = json!(a.best_shift);
    }
    println!("{}", serde_json::to_string_pretty(&report).map_err(failed)?);
    if let Some(e) = report.get("aligned_error").and_then(|v| v.as_f64()) {
        println!("aligned error: {e:e}");
    }
    Ok(())
}

fn run_heatmap(s: &Settings) -> Outcome<()> {
    let grid = s.grid(&[AlgorithmChoice::Fm, AlgorithmChoice::Am])?;
    let out = s.out("heatmap")?;
    let summary = heatmap(&grid, &s.trial_options()?, &out, s.threads()?, &s.output_options()?).map_err(failed)?;
    eprintln!("{} trials in {} cells written to {}", grid.trial_count(), summary.len(), out.display());
    Ok(())
}

fn transition(s: &Settings) -> Outcome<()> {
    let input = s
        .one(s.cli.input.clone(), "input")?
        .or(s.cli.out.clone())
        .ok_or_else(|| usage(anyhow!("transition needs --input <summary.json or heatmap dir>")))?;
    let path = if input.is_dir() { input.join(SUMMARY_FILE) } else { input };
    let threshold = s.one(s.cli.threshold, "threshold")?.unwrap_or(0.5);
    let band = match s.list(&s.cli.band, "band")?.as_deref() {
        None => (0.2, 0.8),
        Some([lo, hi]) if lo <= hi => (*lo, *hi),
        Some(_) => return Err(usage(anyhow!("--band takes lo,hi"))),
    };
    let cells = read_summary(&path).map_err(usage)?;
    let mut algorithms: Vec<AlgorithmChoice> = cells.iter().map(|c| c.algorithm).collect();
    algorithms.sort();
    algorithms.dedup();
    if let Some(wanted) = s.list(&s.cli.alg, "alg")? {
        let wanted = wanted.iter().map(|a| a.parse::<AlgorithmChoice>().map_err(|e| usage(anyhow!(e)))).collect::<Outcome<Vec<_>>>()?;
        algorithms.retain(|a| wanted.contains(a));
    }
    let mut ls: Vec<usize> = cells.iter().map(|c| c.l).collect();
    ls.sort();
    ls.dedup();
    if let Some(wanted) = s.list(&s.cli.l, "L")? {
        ls.retain(|l| wanted.contains(l));
    }
    let mut fits = Vec::new();
    let mut any_failed = false;
    for &l in &ls {
        for &algorithm in &algorithms {
            let slice: Vec<_> = cells.iter().filter(|c| c.l == l && c.algorithm == algorithm).cloned().collect();
            if slice.is_empty() {
                continue;
            }
            let overlay = overlay_fraction(&slice, |snr| reference_line(l, snr), band);
            let fit = match transition_fit(&slice, threshold) {
                Ok(f) => json!(f),
                Err(e) => {
                    any_failed = true;
                    json!({ "error": e.to_string() })
                }
            };
            fits.push(json!({ "L": l, "algorithm": algorithm, "threshold": threshold, "fit": fit, "overlay": overlay }));
        }
    }
    println!("{}", serde_json::to_string_pretty(&fits).map_err(failed)?);
    if any_failed {
        return Err(failed(anyhow!("transition fit failed for at least one (L, algorithm) slice")));
    }
    Ok(())
}

fn compare(s: &Settings) -> Outcome<()> {
    let axis = s.one(s.cli.axis.clone(), "axis")?.unwrap_or_else(|| "snr".into());
    let mut grid = s.grid(&AlgorithmChoice::ALL)?;
    if s.list(&s.cli.n, "n")?.is_none() && axis == "snr" {
        grid.n_values = vec![10_000];
    }
    if s.list(&s.cli.snr, "snr")?.is_none() && axis == "n" {
        grid.snr_values = vec![1.0];
    }
    let fixed_ok = match axis.as_str() {
        "snr" => grid.n_values.len() == 1,
        "n" => grid.snr_values.len() == 1,
        other => return Err(usage(anyhow!("--axis must be snr or n, got '{other}'"))),
    };
    if !fixed_ok || grid.l_values.len() != 1 {
        return Err(usage(anyhow!("compare sweeps one axis: give a single L and a single value for the other axis")));
    }
    let out = s.out("compare")?;
    let omit_runtime = s.output_options()?.omit_runtime;
    let records = run_cells(&grid.data_cells(), &grid, &s.trial_options()?, s.threads()?).map_err(|e| failed(anyhow!(e)))?;
    let summary = write_compare(&out, &records, &axis, omit_runtime).map_err(failed)?;
    eprintln!("{} trials in {} rows written to {}", records.len(), summary.len(), out.display());
    Ok(())
}

fn run_selftest(s: &Settings) -> Outcome<()> {
    let checks = selftest::run_all(s.seed()?);
    for c in &checks {
        println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    match checks.iter().filter(|c| !c.passed).count() {
        0 => Ok(()),
        k => Err(failed(anyhow!("{k} selftest check(s) failed"))),
    }
}

fn dispatch(command: Command) -> Outcome<()> {
    let (run, common): (fn(&Settings) -> Outcome<()>, Common) = match command {
        Command::Simulate(c) => (simulate, c),
        Command::Recover(c) => (recover, c),
        Command::Heatmap(c) => (run_heatmap, c),
        Command::Transition(c) => (transition, c),
        Command::Compare(c) => (compare, c),
        Command::Selftest(c) => (run_selftest, c),
    };
    run(&Settings::new(common)?)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Experiment(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
