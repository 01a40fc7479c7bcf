//! Output files: per-trial CSV, per-cell summary JSON, plot script and
//! optional estimate dumps.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use mrfa_core::io::complex_pairs;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::experiment::{median, run_cells, AlgorithmChoice, ExperimentGrid, TrialOptions, TrialRecord};

pub const TRIALS_FILE: &str = "trials.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const PLOT_FILE: &str = "plot_heatmap.py";
pub const ESTIMATES_FILE: &str = "estimates.jsonl";

pub const TRIAL_HEADER: [&str; 9] = ["L", "snr", "n", "algorithm", "trial", "seed", "error", "runtime_ms", "flags"];

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct OutputOptions {
    /// Leave `runtime_ms` empty so repeated runs produce identical files.
    pub omit_runtime: bool,
    pub dump_estimates: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    #[serde(rename = "L")]
    pub l: usize,
    pub snr: f64,
    pub n: usize,
    pub algorithm: AlgorithmChoice,
    pub median_error: f64,
    pub mean_error: f64,
    pub mean_runtime_ms: f64,
    pub trials: usize,
}

pub fn trial_row(r: &TrialRecord, omit_runtime: bool) -> [String; 9] {
    [
        r.l.to_string(),
        r.snr.to_string(),
        r.n.to_string(),
        r.algorithm.to_string(),
        r.trial.to_string(),
        r.seed.to_string(),
        r.error.to_string(),
        if omit_runtime { String::new() } else { format!("{:.3}", r.runtime_ms) },
        r.flags.join(";"),
    ]
}

/// Groups records into cells (consecutive records sharing `L`, SNR, `N` and
/// algorithm) and summarizes each.
pub fn summarize(records: &[TrialRecord]) -> Vec<CellSummary> {
    let mut out: Vec<CellSummary> = Vec::new();
    let mut i = 0;
    while i < records.len() {
        let head = &records[i];
        let mut j = i;
        while j < records.len()
            && records[j].l == head.l
            && records[j].snr == head.snr
            && records[j].n == head.n
            && records[j].algorithm == head.algorithm
        {
            j += 1;
        }
        let cell = &records[i..j];
        let mut errors: Vec<f64> = cell.iter().map(|r| r.error).collect();
        let k = cell.len() as f64;
        out.push(CellSummary {
            l: head.l,
            snr: head.snr,
            n: head.n,
            algorithm: head.algorithm,
            mean_error: errors.iter().sum::<f64>() / k,
            median_error: median(&mut errors),
            mean_runtime_ms: cell.iter().map(|r| r.runtime_ms).sum::<f64>() / k,
            trials: cell.len(),
        });
        i = j;
    }
    out
}

pub fn read_summary(path: &Path) -> Result<Vec<CellSummary>> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    Ok(serde_json::from_reader(file)?)
}

pub fn write_summary(path: &Path, summary: &[CellSummary], omit_runtime: bool) -> Result<()> {
    let mut cells = summary.to_vec();
    if omit_runtime {
        cells.iter_mut().for_each(|c| c.mean_runtime_ms = 0.0);
    }
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    serde_json::to_writer_pretty(BufWriter::new(file), &cells)?;
    Ok(())
}

const PLOT_SCRIPT: &str = r#"#!/usr/bin/env python3
"""Heat maps of mean aligned error: log10 N on x, log10 SNR on y.

Usage: python3 plot_heatmap.py [summary.json]
One figure per (L, algorithm) is written next to the summary file.
"""
import json
import math
import os
import sys

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

path = sys.argv[1] if len(sys.argv) > 1 else os.path.join(os.path.dirname(__file__), "summary.json")
cells = json.load(open(path))
groups = {}
for c in cells:
    groups.setdefault((c["L"], c["algorithm"]), []).append(c)

for (L, alg), group in sorted(groups.items()):
    ns = sorted({c["n"] for c in group})
    snrs = sorted({c["snr"] for c in group})
    grid = [[float("nan")] * len(ns) for _ in snrs]
    for c in group:
        grid[snrs.index(c["snr"])][ns.index(c["n"])] = c["mean_error"]
    fig, ax = plt.subplots(figsize=(5, 4))
    extent = [math.log10(ns[0]), math.log10(ns[-1]), math.log10(snrs[0]), math.log10(snrs[-1])]
    im = ax.imshow(grid, origin="lower", aspect="auto", extent=extent, vmin=0, vmax=1.2, cmap="viridis")
    ax.set_xlabel("log10 N")
    ax.set_ylabel("log10 SNR")
    ax.set_title(f"{alg}, L = {L}")
    fig.colorbar(im, ax=ax, label="mean aligned error")
    fig.tight_layout()
    fig.savefig(os.path.join(os.path.dirname(os.path.abspath(path)), f"heatmap_{alg}_L{L}.png"), dpi=120)
"#;

pub fn write_plot_script(dir: &Path) -> Result<PathBuf> {
    let path = dir.join(PLOT_FILE);
    fs::write(&path, PLOT_SCRIPT)?;
    Ok(path)
}

fn estimate_line(r: &TrialRecord) -> Option<String> {
    let estimate = r.estimate.as_ref()?;
    Some(
        json!({
            "L": r.l,
            "snr": r.snr,
            "n": r.n,
            "algorithm": r.algorithm,
            "trial": r.trial,
            "seed": r.seed,
            "error": r.error,
            "theta": r.truth.as_deref().map(complex_pairs),
            "theta_tilde": complex_pairs(estimate),
        })
        .to_string(),
    )
}

/// Files written by [`heatmap`].
pub fn heatmap_files(options: &OutputOptions) -> Vec<&'static str> {
    let mut files = vec![TRIALS_FILE, SUMMARY_FILE, PLOT_FILE];
    if options.dump_estimates {
        files.push(ESTIMATES_FILE);
    }
    files
}

/// Runs the whole grid, writing trial rows as cells complete.
pub fn heatmap(
    grid: &ExperimentGrid,
    trial_options: &TrialOptions,
    out_dir: &Path,
    threads: usize,
    options: &OutputOptions,
) -> Result<Vec<CellSummary>> {
    grid.validate().map_err(anyhow::Error::msg)?;
    fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    let trial_options = TrialOptions { keep_estimate: options.dump_estimates, ..*trial_options };
    let mut trials = csv::Writer::from_path(out_dir.join(TRIALS_FILE))?;
    trials.write_record(TRIAL_HEADER)?;
    let mut estimates = if options.dump_estimates { Some(BufWriter::new(File::create(out_dir.join(ESTIMATES_FILE))?)) } else { None };
    let cells = grid.data_cells();
    let mut summary = Vec::new();
    let chunk = threads.max(1);
    for block in cells.chunks(chunk) {
        let records = run_cells(block, grid, &trial_options, threads).map_err(anyhow::Error::msg)?;
        for r in &records {
            trials.write_record(trial_row(r, options.omit_runtime))?;
            if let (Some(w), Some(line)) = (estimates.as_mut(), estimate_line(r)) {
                writeln!(w, "{line}")?;
            }
        }
        trials.flush()?;
        if let Some(w) = estimates.as_mut() {
            w.flush()?;
        }
        summary.extend(summarize(&records));
    }
    write_summary(&out_dir.join(SUMMARY_FILE), &summary, options.omit_runtime)?;
    write_plot_script(out_dir)?;
    Ok(summary)
}

/// Per-trial rows plus a summary table with one row per (axis value,
/// algorithm): median and mean error, median runtime.
pub fn write_compare(out_dir: &Path, records: &[TrialRecord], axis: &str, omit_runtime: bool) -> Result<Vec<CellSummary>> {
    fs::create_dir_all(out_dir)?;
    let mut trials = csv::Writer::from_path(out_dir.join("compare_trials.csv"))?;
    trials.write_record(TRIAL_HEADER)?;
    for r in records {
        trials.write_record(trial_row(r, omit_runtime))?;
    }
    trials.flush()?;
    let summary = summarize(records);
    let mut table = csv::Writer::from_path(out_dir.join("compare.csv"))?;
    table.write_record(["L", "snr", "n", "axis", "algorithm", "median_error", "mean_error", "median_runtime_ms", "trials"])?;
    for cell in &summary {
        let mut runtimes: Vec<f64> = records
            .iter()
            .filter(|r| r.l == cell.l && r.snr == cell.snr && r.n == cell.n && r.algorithm == cell.algorithm)
            .map(|r| r.runtime_ms)
            .collect();
        table.write_record([
            cell.l.to_string(),
            cell.snr.to_string(),
            cell.n.to_string(),
            axis.to_string(),
            cell.algorithm.to_string(),
            cell.median_error.to_string(),
            cell.mean_error.to_string(),
            if omit_runtime { String::new() } else { format!("{:.3}", median(&mut runtimes)) },
            cell.trials.to_string(),
        ])?;
    }
    table.flush()?;
    write_summary(&out_dir.join(SUMMARY_FILE), &summary, omit_runtime)?;
    Ok(summary)
}
