//! Rolling-window GP forecasting and the window-length sweep.
//!
//! Each test row `t` is predicted by a GP trained only on rows `t−w..t`,
//! standardized with those rows' statistics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gp::{fit_design, FitOptions, GpModel, Hyperparameters};
use crate::kernels::{Distance, KernelFamily};
use crate::matrix::{FeatureMatrix, Standardizer};
use crate::par_map;
use crate::series::{Date, DatedSeries};
use crate::stats::{metrics, MetricsReport};

/// Fraction of failed windows above which a rolling run fails as a whole.
pub const MAX_GAP_FRACTION: f64 = 0.10;

/// How windows are scheduled. Serial runs warm-start each window from the
/// previous optimum; parallel runs start every window cold. Both are
/// deterministic, but they need not agree with each other.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExecutionMode {
    #[default]
    Serial,
    Parallel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaptiveConfig {
    pub window: usize,
    pub family: KernelFamily,
    pub distance: Distance,
    pub restarts: usize,
    pub seed: u64,
    /// Recalibrate option-feature decay parameters inside every window.
    /// Requires a [`FeatureRefresher`].
    pub refit_options_params: bool,
    /// Columns to train on; empty means every column.
    pub features: Vec<String>,
    pub mode: ExecutionMode,
}

impl AdaptiveConfig {
    pub fn new(window: usize, family: KernelFamily, seed: u64) -> Self {
        Self {
            window,
            family,
            distance: Distance::Euclidean,
            restarts: 5,
            seed,
            refit_options_params: false,
            features: Vec::new(),
            mode: ExecutionMode::Serial,
        }
    }

    fn fit_options(&self, warm_start: Option<Hyperparameters>) -> FitOptions {
        FitOptions {
            family: self.family,
            distance: self.distance,
            restarts: self.restarts,
            seed: self.seed,
            warm_start,
            ..FitOptions::default()
        }
    }
}

/// Rebuilds the rows of one window (training rows plus the test row last)
/// with features recomputed from window-local calibration.
pub trait FeatureRefresher: Sync {
    fn refresh(&self, matrix: &FeatureMatrix, rows: std::ops::Range<usize>) -> Result<FeatureMatrix>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowGap {
    pub date: Date,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RollingForecast {
    pub window: usize,
    pub mode: ExecutionMode,
    pub dates: Vec<Date>,
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
    pub observed: Vec<f64>,
    pub gaps: Vec<WindowGap>,
}

impl RollingForecast {
    pub fn mean_series(&self) -> Result<DatedSeries> {
        DatedSeries::new("forecast", self.dates.clone(), self.mean.clone())
    }

    pub fn metrics(&self) -> Result<MetricsReport> {
        metrics(&self.mean, &self.observed)
    }

    /// `date,forecast,variance,observed`, one row per forecast.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("date,forecast,variance,observed\n");
        for i in 0..self.dates.len() {
            s.push_str(&format!(
                "{},{},{},{}\n",
                self.dates[i], self.mean[i], self.variance[i], self.observed[i]
            ));
        }
        s
    }
}

struct WindowResult {
    mean: f64,
    variance: f64,
    hyper: Hyperparameters,
}

fn forecast_row(
    matrix: &FeatureMatrix,
    t: usize,
    config: &AdaptiveConfig,
    warm: Option<Hyperparameters>,
    refresher: Option<&dyn FeatureRefresher>,
) -> Result<WindowResult> {
    let w = config.window;
    let local = match refresher {
        Some(r) => r.refresh(matrix, t - w..t + 1)?,
        None => matrix.rows(t - w..t + 1),
    };
    if local.n_rows() != w + 1 {
        return Err(Error::Shape {
            expected: w + 1,
            got: local.n_rows(),
        });
    }
    let local = if config.features.is_empty() {
        local
    } else {
        local.select_columns(&config.features)?
    };
    let train = local.rows(0..w);
    let std = Standardizer::fit(&train)?;
    let train = std.apply(&train)?;
    let query = std.apply_row(&local.row(w));
    let names = train.names().into_iter().map(String::from).collect();
    let (model, _) = fit_design(train.design(), train.target(), names, &config.fit_options(warm))?;
    let p = model.predict(&[query])?;
    Ok(WindowResult {
        mean: p.mean[0],
        variance: p.variance[0],
        hyper: model.hyperparameters(),
    })
}

/// One-step forecasts for every row from `test_start` on.
pub fn rolling_forecast(matrix: &FeatureMatrix, config: &AdaptiveConfig, test_start: usize) -> Result<RollingForecast> {
    rolling_forecast_with(matrix, config, test_start, None)
}

pub fn rolling_forecast_with(
    matrix: &FeatureMatrix,
    config: &AdaptiveConfig,
    test_start: usize,
    refresher: Option<&dyn FeatureRefresher>,
) -> Result<RollingForecast> {
    let w = config.window;
    let n = matrix.n_rows();
    if w < 2 {
        return Err(Error::Validation(format!("window must be >= 2, got {w}")));
    }
    if test_start >= n {
        return Err(Error::InsufficientData("rolling forecast has no test rows".into()));
    }
    if test_start < w {
        return Err(Error::InsufficientData(format!(
            "window {w} needs {w} rows before the first test row, only {test_start} available"
        )));
    }
    if let Some(missing) = config.features.iter().find(|f| matrix.column(f).is_none()) {
        return Err(Error::Validation(format!("feature `{missing}` is not in the matrix")));
    }
    if config.refit_options_params && refresher.is_none() {
        return Err(Error::Config(
            "per-window option recalibration requested without raw options data".into(),
        ));
    }
    let refresher = if config.refit_options_params { refresher } else { None };

    let rows: Vec<usize> = (test_start..n).collect();
    let results: Vec<Result<WindowResult>> = match config.mode {
        ExecutionMode::Parallel => par_map(rows.clone(), |t| forecast_row(matrix, t, config, None, refresher)),
        ExecutionMode::Serial => {
            let mut warm: Option<Hyperparameters> = None;
            rows.iter()
                .map(|&t| {
                    let r = forecast_row(matrix, t, config, warm.clone(), refresher);
                    if let Ok(ok) = &r {
                        warm = Some(ok.hyper.clone());
                    }
                    r
                })
                .collect()
        }
    };

    let mut out = RollingForecast {
        window: w,
        mode: config.mode,
        dates: Vec::new(),
        mean: Vec::new(),
        variance: Vec::new(),
        observed: Vec::new(),
        gaps: Vec::new(),
    };
    for (t, r) in rows.into_iter().zip(results) {
        let date = matrix.dates()[t];
        match r {
            Ok(r) => {
                out.dates.push(date);
                out.mean.push(r.mean);
                out.variance.push(r.variance);
                out.observed.push(matrix.target()[t]);
            }
            Err(e) => {
                tracing::warn!(%date, error = %e, "window failed");
                out.gaps.push(WindowGap {
                    date,
                    reason: e.to_string(),
                });
            }
        }
    }
    let total = out.gaps.len() + out.dates.len();
    if out.gaps.len() as f64 > MAX_GAP_FRACTION * total as f64 {
        return Err(Error::Training(format!(
            "{} of {total} windows failed (first: {} on {})",
            out.gaps.len(),
            out.gaps[0].reason,
            out.gaps[0].date
        )));
    }
    Ok(out)
}

/// Trains on rows `0..split` and predicts rows `split..`, standardizing on
/// the training rows. A rolling forecast with one test row reduces to this.
pub fn batch_forecast(matrix: &FeatureMatrix, split: usize, config: &AdaptiveConfig) -> Result<(GpModel, Vec<f64>)> {
    let m = if config.features.is_empty() {
        matrix.clone()
    } else {
        matrix.select_columns(&config.features)?
    };
    let train = m.rows(0..split);
    let std = Standardizer::fit(&train)?;
    let train = std.apply(&train)?;
    let names = train.names().into_iter().map(String::from).collect();
    let (model, _) = fit_design(train.design(), train.target(), names, &config.fit_options(None))?;
    let test = std.apply(&m.rows(split..m.n_rows()))?;
    let p = model.predict_design(&test.design())?;
    Ok((model, p.mean))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub window: usize,
    pub metrics: Option<MetricsReport>,
    pub gaps: usize,
    pub error: Option<String>,
    /// Set on the row with the lowest NRMSE.
    pub best: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    pub mode: ExecutionMode,
    pub duplicates_removed: usize,
}

impl SweepResult {
    pub fn best(&self) -> Option<&SweepRow> {
        self.rows.iter().find(|r| r.best)
    }

    /// CSV with header `w,corr,p,mad_bp,nrmse`; failed windows have empty cells.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("w,corr,p,mad_bp,nrmse\n");
        for r in &self.rows {
            match &r.metrics {
                Some(m) => s.push_str(&format!(
                    "{},{},{},{},{}\n",
                    r.window, m.pearson_corr, m.p_value, m.mad_bp, m.nrmse
                )),
                None => s.push_str(&format!("{},,,,\n", r.window)),
            }
        }
        s
    }
}

/// Parses `lo:hi:step` (inclusive) or a comma-separated list.
pub fn parse_windows(spec: &str) -> Result<Vec<usize>> {
    let bad = || Error::Validation(format!("bad window list `{spec}`"));
    let parts: Vec<&str> = spec.split(':').collect();
    if parts.len() == 3 {
        let v: Vec<usize> = parts
            .iter()
            .map(|p| p.trim().parse().map_err(|_| bad()))
            .collect::<Result<_>>()?;
        if v[2] == 0 || v[0] > v[1] {
            return Err(bad());
        }
        return Ok((v[0]..=v[1]).step_by(v[2]).collect());
    }
    spec.split(',').map(|p| p.trim().parse().map_err(|_| bad())).collect()
}

/// Runs a rolling forecast per window length over the same test rows.
/// Windows are sorted and deduplicated; a failing window is reported in
/// its row rather than aborting the sweep.
pub fn window_sweep(
    matrix: &FeatureMatrix,
    config: &AdaptiveConfig,
    windows: &[usize],
    test_start: usize,
    refresher: Option<&dyn FeatureRefresher>,
) -> Result<SweepResult> {
    if windows.is_empty() {
        return Err(Error::Validation("empty window list".into()));
    }
    let mut ws = windows.to_vec();
    ws.sort_unstable();
    ws.dedup();
    let duplicates_removed = windows.len() - ws.len();
    if duplicates_removed > 0 {
        tracing::warn!(duplicates_removed, "duplicate window lengths removed");
    }
    if let Some(&w) = ws.iter().find(|&&w| w > test_start) {
        return Err(Error::Validation(format!(
            "window {w} exceeds the {test_start} rows available before the test set"
        )));
    }
    let mut rows: Vec<SweepRow> = ws
        .iter()
        .map(|&w| {
            let cfg = AdaptiveConfig {
                window: w,
                ..config.clone()
            };
            match rolling_forecast_with(matrix, &cfg, test_start, refresher).and_then(|f| {
                let m = f.metrics()?;
                Ok((m, f.gaps.len()))
            }) {
                Ok((m, gaps)) => SweepRow {
                    window: w,
                    metrics: Some(m),
                    gaps,
                    error: None,
                    best: false,
                },
                Err(e) => {
                    tracing::warn!(window = w, error = %e, "sweep window failed");
                    SweepRow {
                        window: w,
                        metrics: None,
                        gaps: 0,
                        error: Some(e.to_string()),
                        best: false,
                    }
                }
            }
        })
        .collect();
    let best = rows
        .iter()
        .enumerate()
        .filter_map(|(i, r)| r.metrics.as_ref().map(|m| (i, m.nrmse)))
        .fold(None::<(usize, f64)>, |acc, (i, v)| match acc {
            Some((_, b)) if b <= v => acc,
            _ => Some((i, v)),
        });
    if let Some((i, _)) = best {
        rows[i].best = true;
    }
    Ok(SweepResult {
        rows,
        mode: config.mode,
        duplicates_removed,
    })
}
