//! Locating the phase transition in a heat map.

use serde::Serialize;

use crate::report::CellSummary;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Crossing {
    pub snr: f64,
    /// Interpolated `log₁₀ N*` where the median error first drops below the
    /// threshold.
    pub log10_n: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransitionFit {
    /// Least-squares slope of `log₁₀ N*` against `log₁₀ SNR`.
    pub slope: f64,
    pub intercept: f64,
    pub crossings: Vec<Crossing>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TransitionError {
    InsufficientCrossings { found: usize, needed: usize },
}

impl std::fmt::Display for TransitionError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TransitionError::InsufficientCrossings { found, needed } => {
                write!(f, "only {found} SNR rows cross the threshold, need at least {needed}")
            }
        }
    }
}

impl std::error::Error for TransitionError {}

pub const MIN_CROSSINGS: usize = 4;

/// Rows of `cells` keyed by SNR, each sorted by `N`.
fn rows(cells: &[CellSummary]) -> Vec<(f64, Vec<&CellSummary>)> {
    let mut snrs: Vec<f64> = cells.iter().map(|c| c.snr).collect();
    snrs.sort_by(f64::total_cmp);
    snrs.dedup();
    snrs.into_iter()
        .map(|snr| {
            let mut row: Vec<&CellSummary> = cells.iter().filter(|c| c.snr == snr).collect();
            row.sort_by_key(|c| c.n);
            (snr, row)
        })
        .collect()
}

/// First downward crossing of `threshold` along a row, interpolated linearly
/// in `log₁₀ N`.
pub fn row_crossing(row: &[&CellSummary], threshold: f64) -> Option<f64> {
    if row.first()?.median_error < threshold {
        return None;
    }
    row.windows(2).find_map(|w| {
        let (a, b) = (w[0], w[1]);
        (a.median_error >= threshold && b.median_error < threshold).then(|| {
            let (xa, xb) = ((a.n as f64).log10(), (b.n as f64).log10());
            let t = (a.median_error - threshold) / (a.median_error - b.median_error);
            xa + t * (xb - xa)
        })
    })
}

/// Fits `log₁₀ N* = slope · log₁₀ SNR + intercept` over rows that cross.
/// `cells` should hold a single `(L, algorithm)` slice of a heat map.
pub fn transition_fit(cells: &[CellSummary], threshold: f64) -> Result<TransitionFit, TransitionError> {
    let crossings: Vec<Crossing> =
        rows(cells).into_iter().filter_map(|(snr, row)| row_crossing(&row, threshold).map(|log10_n| Crossing { snr, log10_n })).collect();
    if crossings.len() < MIN_CROSSINGS {
        return Err(TransitionError::InsufficientCrossings { found: crossings.len(), needed: MIN_CROSSINGS });
    }
    let k = crossings.len() as f64;
    let xs: Vec<f64> = crossings.iter().map(|c| c.snr.log10()).collect();
    let ys: Vec<f64> = crossings.iter().map(|c| c.log10_n).collect();
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let slope = sxy / sxx;
    Ok(TransitionFit { slope, intercept: my - slope * mx, crossings })
}

/// Reference line `N = 1 / (4 · L · SNR⁴)`, the low-SNR sample size at which
/// the rank-one spike of the stride covariance separates from the noise.
pub fn reference_line(l: usize, snr: f64) -> f64 {
    1.0 / (4.0 * l as f64 * snr.powi(4))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OverlayRow {
    pub snr: f64,
    pub line_n: f64,
    /// Grid `N` nearest the line in log scale, if the line lies within the
    /// grid's `N` range.
    pub cell_n: Option<usize>,
    pub median_error: Option<f64>,
    pub inside_band: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OverlayReport {
    pub rows: Vec<OverlayRow>,
    pub fraction: f64,
}

/// For each SNR row, checks whether the cell the line passes through has a
/// median error inside `band`. A line outside the grid's `N` range (by more
/// than half a grid step) counts as a miss.
pub fn overlay_fraction(cells: &[CellSummary], line: impl Fn(f64) -> f64, band: (f64, f64)) -> OverlayReport {
    let rows: Vec<OverlayRow> = rows(cells)
        .into_iter()
        .map(|(snr, row)| {
            let line_n = line(snr);
            let target = line_n.log10();
            let logs: Vec<f64> = row.iter().map(|c| (c.n as f64).log10()).collect();
            let half_step = if logs.len() > 1 { 0.5 * (logs[logs.len() - 1] - logs[0]) / (logs.len() - 1) as f64 } else { 0.5 };
            let in_range = target >= logs[0] - half_step && target <= logs[logs.len() - 1] + half_step;
            let nearest = logs.iter().enumerate().min_by(|a, b| (a.1 - target).abs().total_cmp(&(b.1 - target).abs())).map(|(i, _)| row[i]);
            let hit = nearest.filter(|_| in_range);
            let median_error = hit.map(|c| c.median_error);
            OverlayRow {
                snr,
                line_n,
                cell_n: hit.map(|c| c.n),
                median_error,
                inside_band: median_error.is_some_and(|e| e >= band.0 && e <= band.1),
            }
        })
        .collect();
    let fraction = if rows.is_empty() { 0.0 } else { rows.iter().filter(|r| r.inside_band).count() as f64 / rows.len() as f64 };
    OverlayReport { rows, fraction }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiment::AlgorithmChoice;

    fn cell(snr: f64, n: usize, err: f64) -> CellSummary {
        CellSummary { l: 16, snr, n, algorithm: AlgorithmChoice::Am, median_error: err, mean_error: err, mean_runtime_ms: 0.0, trials: 1 }
    }

    #[test]
    fn step_at_inverse_fourth_power_gives_slope_minus_four() {
        // Error 1 below N = SNR⁻⁴ and 0 from there on, with the steps on
        // grid points.
        let ns: Vec<usize> = (0..8).map(|j| 10usize.pow(j)).collect();
        let mut cells = Vec::new();
        for j in 1..=5 {
            let s = 10f64.powf(-(j as f64) / 4.0);
            for &n in &ns {
                cells.push(cell(s, n, if n < 10usize.pow(j) { 1.0 } else { 0.0 }));
            }
        }
        let fit = transition_fit(&cells, 0.5).unwrap();
        assert_eq!(fit.crossings.len(), 5);
        assert!((fit.slope + 4.0).abs() < 1e-12, "{fit:?}");
    }

    #[test]
    fn interpolation_is_linear_in_log_n() {
        let row = [cell(1.0, 10, 0.9), cell(1.0, 100, 0.1)];
        let refs: Vec<&CellSummary> = row.iter().collect();
        assert!((row_crossing(&refs, 0.5).unwrap() - 1.5).abs() < 1e-12);
        let low = [cell(1.0, 10, 0.3)];
        assert!(row_crossing(&low.iter().collect::<Vec<_>>(), 0.5).is_none());
    }

    #[test]
    fn too_few_crossings() {
        let cells = vec![cell(1.0, 10, 0.9), cell(1.0, 100, 0.1)];
        assert!(matches!(transition_fit(&cells, 0.5), Err(TransitionError::InsufficientCrossings { found: 1, needed: 4 })));
    }

    #[test]
    fn overlay_counts_band_hits() {
        let mut cells = Vec::new();
        for (s, errs) in [(1.0, [0.9, 0.5, 0.1]), (0.5, [0.9, 0.9, 0.9])] {
            for (n, e) in [10usize, 100, 1000].into_iter().zip(errs) {
                cells.push(cell(s, n, e));
            }
        }
        let r = overlay_fraction(&cells, |_| 100.0, (0.2, 0.8));
        assert_eq!(r.fraction, 0.5);
        let far = overlay_fraction(&cells, |_| 1e9, (0.0, 1.0));
        assert_eq!(far.fraction, 0.0);
        assert!((reference_line(16, 0.1) - 156.25).abs() < 1e-9);
    }
}
