//! Config-driven end-to-end runs: ingest, features, relevance, rolling
//! forecasts, window sweep, baselines and a reproducibility manifest.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::adaptive::{
    rolling_forecast_with, window_sweep, AdaptiveConfig, ExecutionMode, FeatureRefresher, RollingForecast, SweepResult,
};
use crate::benchmarks::{
    adaptive_ar, default_kalman_grid, kalman_defaults, kalman_forecasts, lookahead_ar, tune_kalman,
};
use crate::error::{Error, Result};
use crate::features::exogenous::{broker_indices, BrokerIndices, SentimentFeatures};
use crate::features::options::{calibrate, GammaDFit, PriceSpaceFeatures, PriceSpaceParams, ViscosityFit};
use crate::features::technical::TechnicalFeatures;
use crate::gp::{fit_design, kfold_kernel_select, FitOptions, GpModel, KernelSelection, RelevanceReport};
use crate::ingest::{self, BrokerRecord, MissingPolicy, OptionsChainSnapshot};
use crate::kernels::{Distance, KernelFamily};
use crate::matrix::{add_noise_baseline, center_scale, Column, FeatureMatrix};
use crate::series::{Date, DatedSeries};
use crate::stats::{self, CorrelationResult, MetricsReport};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    pub prices: Option<PathBuf>,
    pub sentiment: Option<PathBuf>,
    pub options: Option<PathBuf>,
    pub brokers: Option<PathBuf>,
    pub missing: MissingPolicy,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitConfig {
    /// Last training date, inclusive.
    pub train_end: Option<Date>,
    /// Last test date, inclusive; the end of the data when absent.
    pub test_end: Option<Date>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub kernel: KernelFamily,
    pub distance: Distance,
    pub restarts: usize,
    pub seed: u64,
    /// Model inputs; empty means every combined feature.
    pub features: Vec<String>,
    /// Choose the kernel family by k-fold CV on the training rows.
    pub select_kernel: bool,
    pub folds: usize,
    pub candidates: Vec<KernelFamily>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            kernel: KernelFamily::Matern32,
            distance: Distance::Euclidean,
            restarts: 5,
            seed: 0,
            features: Vec::new(),
            select_kernel: false,
            folds: 10,
            candidates: KernelFamily::ALL.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdaptiveSection {
    pub window: usize,
    pub sweep: Vec<usize>,
    pub restarts: usize,
    pub mode: ExecutionMode,
    pub refit_options_params: bool,
}

impl Default for AdaptiveSection {
    fn default() -> Self {
        Self {
            window: 250,
            sweep: vec![150, 250, 350],
            restarts: 5,
            mode: ExecutionMode::Serial,
            refit_options_params: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchmarkConfig {
    pub ar_orders: Vec<usize>,
    pub kf_orders: Vec<usize>,
    /// Grid-search Kalman noise on the training rows; defaults otherwise.
    pub tune_kalman: bool,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        Self {
            ar_orders: vec![1, 3, 10],
            kf_orders: vec![1, 3, 10],
            tune_kalman: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("run"),
        }
    }
}

/// Everything a run needs. Relative paths resolve against `base`, the
/// directory of the config file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub data: DataConfig,
    pub split: SplitConfig,
    pub model: ModelConfig,
    pub adaptive: AdaptiveSection,
    pub benchmarks: BenchmarkConfig,
    pub output: OutputConfig,
    #[serde(skip)]
    pub base: PathBuf,
}

impl RunConfig {
    pub fn from_toml_str(text: &str, base: &Path) -> Result<Self> {
        let mut cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.base = base.to_path_buf();
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_toml_str(&text, &base)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base.join(p)
        }
    }

    pub fn output_dir(&self) -> PathBuf {
        self.resolve(&self.output.dir)
    }

    pub fn validate(&self) -> Result<()> {
        if self.data.prices.is_none() {
            return Err(Error::Config("data.prices is required".into()));
        }
        if self.split.train_end.is_none() {
            return Err(Error::Config("split.train_end is required".into()));
        }
        if let (Some(a), Some(b)) = (self.split.train_end, self.split.test_end) {
            if b <= a {
                return Err(Error::Config(format!("test_end {b} must follow train_end {a}")));
            }
        }
        if self.model.restarts == 0 || self.adaptive.restarts == 0 {
            return Err(Error::Config("restarts must be >= 1".into()));
        }
        if self.adaptive.window < 2 || self.adaptive.sweep.iter().any(|&w| w < 2) {
            return Err(Error::Config("window lengths must be >= 2".into()));
        }
        if self.model.select_kernel && self.model.candidates.is_empty() {
            return Err(Error::Config("kernel selection needs at least one candidate".into()));
        }
        if self
            .benchmarks
            .ar_orders
            .iter()
            .chain(&self.benchmarks.kf_orders)
            .any(|&p| p == 0)
        {
            return Err(Error::Config("benchmark orders must be >= 1".into()));
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form of the config.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex(&Sha256::digest(&json))
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Raw inputs; absent domains are `None`.
#[derive(Debug, Clone)]
pub struct RawData {
    pub prices: DatedSeries,
    pub sentiment: Option<(DatedSeries, DatedSeries)>,
    pub options: Option<Vec<OptionsChainSnapshot>>,
    pub brokers: Option<Vec<BrokerRecord>>,
}

pub fn load_raw(cfg: &RunConfig) -> Result<RawData> {
    let d = &cfg.data;
    let prices_path = d
        .prices
        .as_ref()
        .ok_or_else(|| Error::Config("data.prices is required".into()))?;
    Ok(RawData {
        prices: ingest::load_prices_with(&cfg.resolve(prices_path), d.missing)?,
        sentiment: d
            .sentiment
            .as_ref()
            .map(|p| ingest::load_sentiment(&cfg.resolve(p), d.missing))
            .transpose()?,
        options: d
            .options
            .as_ref()
            .map(|p| ingest::load_options(&cfg.resolve(p)))
            .transpose()?,
        brokers: d
            .brokers
            .as_ref()
            .map(|p| ingest::load_brokers(&cfg.resolve(p)))
            .transpose()?,
    })
}

/// `ln(P(t+1)/P(t))` dated at `t`, over consecutive entries of `prices`.
pub fn next_day_returns(prices: &DatedSeries) -> Result<DatedSeries> {
    let v = prices.values();
    if v.len() < 2 {
        return Err(Error::InsufficientData("need at least 2 prices".into()));
    }
    DatedSeries::new(
        "next_return",
        prices.dates()[..v.len() - 1].to_vec(),
        v.windows(2).map(|w| (w[1] / w[0]).ln()).collect(),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceSpaceCalibration {
    pub params: PriceSpaceParams,
    pub directionality: GammaDFit,
    pub viscosity: ViscosityFit,
}

#[derive(Debug, Clone)]
pub struct FeatureSet {
    pub technical: TechnicalFeatures,
    pub sentiment: Option<SentimentFeatures>,
    pub price_space: Option<(PriceSpaceFeatures, PriceSpaceCalibration)>,
    pub brokers: Option<BrokerIndices>,
    /// Every feature on the common date index, with the next-row log return
    /// as target.
    pub combined: FeatureMatrix,
    pub domains_present: Vec<String>,
    pub domains_omitted: Vec<String>,
}

/// Computes per-domain features and the combined matrix. Option decay
/// parameters are calibrated on dates up to `train_end`.
pub fn build_features(raw: &RawData, train_end: Option<Date>) -> Result<FeatureSet> {
    let technical = TechnicalFeatures::compute(&raw.prices)?;
    let mut present = vec!["prices".to_string()];
    let mut omitted = Vec::new();

    let sentiment = match &raw.sentiment {
        Some((st, tw)) => {
            present.push("sentiment".into());
            Some(SentimentFeatures::compute(st, tw)?)
        }
        None => {
            omitted.push("sentiment".into());
            None
        }
    };
    let price_space = match &raw.options {
        Some(snaps) => {
            present.push("options".into());
            let next = next_day_returns(&raw.prices)?;
            let (params, gd, vf) = calibrate(snaps, &raw.prices, &next, train_end)?;
            let feats = PriceSpaceFeatures::compute(snaps, &raw.prices, &params)?;
            Some((
                feats,
                PriceSpaceCalibration {
                    params,
                    directionality: gd,
                    viscosity: vf,
                },
            ))
        }
        None => {
            omitted.push("options".into());
            None
        }
    };
    let brokers = match &raw.brokers {
        Some(recs) => {
            present.push("brokers".into());
            Some(broker_indices(recs, Some(raw.prices.dates()))?)
        }
        None => {
            omitted.push("brokers".into());
            None
        }
    };

    let mut all: Vec<&DatedSeries> = technical.as_list().to_vec();
    if let Some(s) = &sentiment {
        all.extend(s.as_list());
    }
    if let Some((p, _)) = &price_space {
        all.extend([&p.directionality, &p.viscosity]);
    }
    if let Some(b) = &brokers {
        all.extend(b.as_list());
    }
    let mut sources = all.clone();
    sources.push(&raw.prices);
    let idx = ingest::align(&sources, &[])?;
    if idx.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "only {} aligned dates across all domains",
            idx.len()
        )));
    }
    let prices = raw.prices.restrict_to(&idx);
    let target: Vec<f64> = prices.values().windows(2).map(|w| (w[1] / w[0]).ln()).collect();
    let dates = idx[..idx.len() - 1].to_vec();
    let columns = all
        .iter()
        .map(|s| Column::new(s.name(), s.restrict_to(&dates).values().to_vec()))
        .collect();
    let combined = FeatureMatrix::new(dates, columns, target)?;
    Ok(FeatureSet {
        technical,
        sentiment,
        price_space,
        brokers,
        combined,
        domains_present: present,
        domains_omitted: omitted,
    })
}

impl FeatureSet {
    /// Writes one CSV per present domain plus `combined.csv`.
    pub fn write(&self, dir: &Path) -> Result<Vec<String>> {
        let mut written = Vec::new();
        let mut put = |name: &str, series: &[&DatedSeries]| -> Result<()> {
            ingest::write_series_csv(&dir.join(name), series)?;
            written.push(name.to_string());
            Ok(())
        };
        put("features_technical.csv", &self.technical.as_list())?;
        if let Some(s) = &self.sentiment {
            put("features_sentiment.csv", &s.as_list())?;
        }
        if let Some((p, _)) = &self.price_space {
            put("features_options.csv", &[&p.directionality, &p.viscosity])?;
        }
        if let Some(b) = &self.brokers {
            put("features_brokers.csv", &b.as_list())?;
        }
        self.combined.write_csv(&dir.join("combined.csv"))?;
        written.push("combined.csv".into());
        Ok(written)
    }
}

/// Recomputes Directionality and Viscosity inside each rolling window with
/// decay parameters calibrated on that window's training dates only.
pub struct OptionsRefresher<'a> {
    pub snapshots: &'a [OptionsChainSnapshot],
    pub prices: &'a DatedSeries,
}

impl FeatureRefresher for OptionsRefresher<'_> {
    fn refresh(&self, matrix: &FeatureMatrix, rows: std::ops::Range<usize>) -> Result<FeatureMatrix> {
        let local = matrix.rows(rows.clone());
        let dates = local.dates();
        let (first, last) = (dates[0], dates[dates.len() - 1]);
        let train_end = dates[dates.len() - 2];
        let window_snaps: Vec<OptionsChainSnapshot> = self
            .snapshots
            .iter()
            .filter(|s| s.date >= first && s.date <= last)
            .cloned()
            .collect();
        let next = next_day_returns(self.prices)?;
        let (params, _, _) = calibrate(&window_snaps, self.prices, &next, Some(train_end))?;
        // Directionality on `first` needs the snapshot before it.
        let prior: Vec<OptionsChainSnapshot> = self
            .snapshots
            .iter()
            .rev()
            .find(|s| s.date < first)
            .into_iter()
            .cloned()
            .chain(window_snaps)
            .collect();
        let feats = PriceSpaceFeatures::compute(&prior, self.prices, &params)?;
        let mut out = local.clone();
        for s in [&feats.directionality, &feats.viscosity] {
            if local.column(s.name()).is_none() {
                continue;
            }
            let values = dates
                .iter()
                .map(|d| {
                    s.get(*d)
                        .ok_or_else(|| Error::Alignment(format!("{} missing on {d} after recalibration", s.name())))
                })
                .collect::<Result<Vec<f64>>>()?;
            out = out.replace_column(Column::new(s.name(), values))?;
        }
        Ok(out)
    }
}

/// Percentile (0–100) of `values` by linear interpolation between order
/// statistics.
pub fn percentile(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    if v.is_empty() {
        return f64::NAN;
    }
    let pos = (q / 100.0).clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}

/// Predictive means over two features at percentile-indexed points of
/// their training distributions, all other inputs held at zero (the
/// training mean after centering).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfaceGrid {
    pub x_feature: String,
    pub y_feature: String,
    pub percentiles: Vec<f64>,
    pub x_values: Vec<f64>,
    pub y_values: Vec<f64>,
    /// `mean[j][i]` is the prediction at `(x_values[i], y_values[j])`.
    pub mean: Vec<Vec<f64>>,
}

pub fn surface_grid(model: &GpModel, x_feature: &str, y_feature: &str, resolution: usize) -> Result<SurfaceGrid> {
    if resolution == 0 {
        return Err(Error::Validation("grid resolution must be >= 1".into()));
    }
    let find = |name: &str| {
        model
            .feature_names()
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::Validation(format!("model has no feature `{name}`")))
    };
    let ix = find(x_feature)?;
    let iy = find(y_feature)?;
    if ix == iy {
        return Err(Error::Validation("surface axes must be two different features".into()));
    }
    let percentiles: Vec<f64> = (0..resolution)
        .map(|i| (i as f64 + 0.5) / resolution as f64 * 100.0)
        .collect();
    let col = |j: usize| -> Vec<f64> { model.train_x().column(j).iter().copied().collect() };
    let (cx, cy) = (col(ix), col(iy));
    let x_values: Vec<f64> = percentiles.iter().map(|&q| percentile(&cx, q)).collect();
    let y_values: Vec<f64> = percentiles.iter().map(|&q| percentile(&cy, q)).collect();
    let d = model.dim();
    let mut queries = Vec::with_capacity(resolution * resolution);
    for &yv in &y_values {
        for &xv in &x_values {
            let mut q = vec![0.0; d];
            q[ix] = xv;
            q[iy] = yv;
            queries.push(q);
        }
    }
    let p = model.predict(&queries)?;
    let mean = p.mean.chunks(resolution).map(<[f64]>::to_vec).collect();
    Ok(SurfaceGrid {
        x_feature: x_feature.into(),
        y_feature: y_feature.into(),
        percentiles,
        x_values,
        y_values,
        mean,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureCorrelation {
    pub feature: String,
    #[serde(flatten)]
    pub result: Option<CorrelationResult>,
    pub error: Option<String>,
}

/// Correlation of each column with the target; undefined ones are reported,
/// not fatal.
pub fn feature_correlations(matrix: &FeatureMatrix) -> Vec<FeatureCorrelation> {
    matrix
        .columns()
        .iter()
        .map(|c| match stats::correlate(&c.values, matrix.target()) {
            Ok(r) => FeatureCorrelation {
                feature: c.name.clone(),
                result: Some(r),
                error: None,
            },
            Err(e) => FeatureCorrelation {
                feature: c.name.clone(),
                result: None,
                error: Some(e.to_string()),
            },
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelevanceOutput {
    pub kernel: KernelFamily,
    pub seed: u64,
    pub n_train: usize,
    pub log_marginal_likelihood: f64,
    pub signal_variance: f64,
    pub noise_variance: f64,
    pub report: RelevanceReport,
}

/// Standardizes `train`, appends the noise baseline and fits an ARD GP.
pub fn relevance_fit(
    train: &FeatureMatrix,
    opts: &FitOptions,
) -> Result<(GpModel, RelevanceOutput, crate::matrix::Standardizer)> {
    let (scaled, std) = center_scale(train)?;
    let with_noise = add_noise_baseline(&scaled, opts.seed)?;
    let names = with_noise.names().into_iter().map(String::from).collect();
    let (model, diag) = fit_design(with_noise.design(), with_noise.target(), names, opts)?;
    let report = model.relevance()?;
    let out = RelevanceOutput {
        kernel: opts.family,
        seed: opts.seed,
        n_train: train.n_rows(),
        log_marginal_likelihood: diag.lml,
        signal_variance: model.kernel().signal_variance,
        noise_variance: model.noise_variance(),
        report,
    };
    Ok((model, out, std))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkRow {
    pub model: String,
    pub order: usize,
    pub window: Option<usize>,
    pub metrics: MetricsReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub gp: MetricsReport,
    pub gp_window: usize,
    pub gp_gaps: usize,
    pub benchmarks: Vec<BenchmarkRow>,
    pub best_adaptive_ar: Option<String>,
    pub best_adaptive_ar_nrmse: Option<f64>,
    pub gp_beats_adaptive_ar: Option<bool>,
    pub best_sweep_window: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub config_hash: String,
    pub seed: u64,
    pub config: RunConfig,
    pub domains_present: Vec<String>,
    pub domains_omitted: Vec<String>,
    pub execution_mode: ExecutionMode,
    pub kernel: KernelFamily,
    pub rows: BTreeMap<String, usize>,
    /// SHA-256 of every artifact, by file name.
    pub artifacts: BTreeMap<String, String>,
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub dir: PathBuf,
    pub features: FeatureSet,
    pub relevance: RelevanceOutput,
    pub forecast: RollingForecast,
    pub sweep: Option<SweepResult>,
    pub metrics: RunMetrics,
    pub manifest: Manifest,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    std::fs::write(path, s).map_err(|e| Error::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn hash_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex(&Sha256::digest(&bytes)))
}

/// Runs every stage and writes the artifacts into the configured output
/// directory. Any stage failure aborts the run with the stage named.
pub fn run_pipeline(cfg: &RunConfig) -> Result<RunSummary> {
    cfg.validate()?;
    let dir = cfg.output_dir();
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let seed = cfg.model.seed;
    let train_end = cfg.split.train_end.expect("validated");

    let raw = load_raw(cfg).map_err(|e| e.in_stage("ingest"))?;
    let (first, last) = (
        raw.prices.first_date().expect("non-empty"),
        raw.prices.last_date().expect("non-empty"),
    );
    if train_end < first || train_end >= last {
        return Err(Error::Config(format!(
            "train_end {train_end} outside the price history {first}..{last}"
        ))
        .in_stage("ingest"));
    }

    let features = build_features(&raw, Some(train_end)).map_err(|e| e.in_stage("features"))?;
    let mut artifacts = features.write(&dir).map_err(|e| e.in_stage("features"))?;
    if let Some((_, cal)) = &features.price_space {
        write_json(&dir.join("price_space.json"), cal)?;
        artifacts.push("price_space.json".into());
    }

    let combined = &features.combined;
    let n_train = combined.split_at_date(train_end);
    let n_end = match cfg.split.test_end {
        Some(d) => combined.split_at_date(d),
        None => combined.n_rows(),
    };
    if n_train < 2 || n_end <= n_train {
        return Err(Error::InsufficientData(format!(
            "split leaves {n_train} training and {} test rows",
            n_end.saturating_sub(n_train)
        ))
        .in_stage("features"));
    }
    let model_matrix = if cfg.model.features.is_empty() {
        combined.rows(0..n_end)
    } else {
        combined
            .rows(0..n_end)
            .select_columns(&cfg.model.features)
            .map_err(|e| e.in_stage("features"))?
    };
    let train = model_matrix.rows(0..n_train);

    let corr = feature_correlations(&combined.rows(0..n_train));
    write_json(&dir.join("correlations.json"), &corr)?;
    artifacts.push("correlations.json".into());

    let mut family = cfg.model.kernel;
    if cfg.model.select_kernel {
        let (scaled, _) = center_scale(&train).map_err(|e| e.in_stage("kernel_selection"))?;
        let opts = FitOptions {
            distance: cfg.model.distance,
            restarts: cfg.model.restarts,
            seed,
            ..FitOptions::default()
        };
        let sel: KernelSelection = kfold_kernel_select(&scaled, cfg.model.folds, &cfg.model.candidates, &opts)
            .map_err(|e| e.in_stage("kernel_selection"))?;
        family = sel.best;
        write_json(&dir.join("kernel_selection.json"), &sel)?;
        artifacts.push("kernel_selection.json".into());
    }

    let fit_opts = FitOptions {
        family,
        distance: cfg.model.distance,
        restarts: cfg.model.restarts,
        seed,
        ..FitOptions::default()
    };
    let (model, relevance, std) = relevance_fit(&train, &fit_opts).map_err(|e| e.in_stage("relevance"))?;
    write_json(&dir.join("relevance.json"), &relevance)?;
    write_json(&dir.join("model.json"), &model.snapshot(Some(std)))?;
    artifacts.extend(["relevance.json".into(), "model.json".into()]);

    let acfg = AdaptiveConfig {
        window: cfg.adaptive.window,
        family,
        distance: cfg.model.distance,
        restarts: cfg.adaptive.restarts,
        seed,
        refit_options_params: cfg.adaptive.refit_options_params,
        features: Vec::new(),
        mode: cfg.adaptive.mode,
    };
    let refresher = raw.options.as_deref().map(|snapshots| OptionsRefresher {
        snapshots,
        prices: &raw.prices,
    });
    let refresher_dyn = refresher.as_ref().map(|r| r as &dyn FeatureRefresher);
    let forecast =
        rolling_forecast_with(&model_matrix, &acfg, n_train, refresher_dyn).map_err(|e| e.in_stage("forecast"))?;
    write_text(&dir.join("forecasts.csv"), &forecast.to_csv())?;
    artifacts.push("forecasts.csv".into());

    let sweep = if cfg.adaptive.sweep.is_empty() {
        None
    } else {
        let s = window_sweep(&model_matrix, &acfg, &cfg.adaptive.sweep, n_train, refresher_dyn)
            .map_err(|e| e.in_stage("sweep"))?;
        write_text(&dir.join("sweep.csv"), &s.to_csv())?;
        artifacts.push("sweep.csv".into());
        Some(s)
    };

    let target = DatedSeries::new("target", model_matrix.dates().to_vec(), model_matrix.target().to_vec())
        .map_err(|e| e.in_stage("benchmarks"))?;
    let test_dates = &model_matrix.dates()[n_train..];
    let observed = &model_matrix.target()[n_train..];
    let bench =
        run_benchmarks(&target, n_train, cfg.adaptive.window, &cfg.benchmarks).map_err(|e| e.in_stage("benchmarks"))?;
    let mut rows = Vec::new();
    let mut bench_csv_cols: Vec<(String, Vec<f64>)> = Vec::new();
    for (name, order, window, series) in &bench {
        let values: Vec<f64> = test_dates
            .iter()
            .map(|d| {
                series
                    .get(*d)
                    .ok_or_else(|| Error::Alignment(format!("{name} has no forecast on {d}")))
            })
            .collect::<Result<_>>()
            .map_err(|e| e.in_stage("benchmarks"))?;
        let m = stats::metrics(&values, observed).map_err(|e| e.in_stage("benchmarks"))?;
        rows.push(BenchmarkRow {
            model: name.clone(),
            order: *order,
            window: *window,
            metrics: m,
        });
        bench_csv_cols.push((series.name().to_string(), values));
    }
    let mut csv = String::from("model,order,window,n,corr,p,mad_bp,nrmse\n");
    for r in &rows {
        let m = &r.metrics;
        csv.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.model,
            r.order,
            r.window.map(|w| w.to_string()).unwrap_or_default(),
            m.n,
            m.pearson_corr,
            m.p_value,
            m.mad_bp,
            m.nrmse
        ));
    }
    write_text(&dir.join("benchmarks.csv"), &csv)?;
    let mut fcsv = String::from("date");
    for (n, _) in &bench_csv_cols {
        fcsv.push(',');
        fcsv.push_str(n);
    }
    fcsv.push_str(",observed\n");
    for (i, d) in test_dates.iter().enumerate() {
        fcsv.push_str(&d.to_string());
        for (_, v) in &bench_csv_cols {
            fcsv.push_str(&format!(",{}", v[i]));
        }
        fcsv.push_str(&format!(",{}\n", observed[i]));
    }
    write_text(&dir.join("benchmark_forecasts.csv"), &fcsv)?;
    artifacts.extend(["benchmarks.csv".into(), "benchmark_forecasts.csv".into()]);

    let gp = forecast.metrics().map_err(|e| e.in_stage("report"))?;
    let best_ar = rows
        .iter()
        .filter(|r| r.model == "ar_adaptive")
        .min_by(|a, b| a.metrics.nrmse.total_cmp(&b.metrics.nrmse));
    let metrics = RunMetrics {
        gp_beats_adaptive_ar: best_ar.map(|b| gp.nrmse < b.metrics.nrmse),
        best_adaptive_ar: best_ar.map(|b| format!("ar{}_adaptive", b.order)),
        best_adaptive_ar_nrmse: best_ar.map(|b| b.metrics.nrmse),
        gp,
        gp_window: forecast.window,
        gp_gaps: forecast.gaps.len(),
        benchmarks: rows,
        best_sweep_window: sweep.as_ref().and_then(|s| s.best()).map(|r| r.window),
    };
    write_json(&dir.join("metrics.json"), &metrics)?;
    artifacts.push("metrics.json".into());

    let mut hashes = BTreeMap::new();
    for a in &artifacts {
        hashes.insert(a.clone(), hash_file(&dir.join(a))?);
    }
    let mut counts = BTreeMap::new();
    counts.insert("combined".to_string(), combined.n_rows());
    counts.insert("train".to_string(), n_train);
    counts.insert("test".to_string(), n_end - n_train);
    let manifest = Manifest {
        format_version: 1,
        config_hash: cfg.hash(),
        seed,
        config: cfg.clone(),
        domains_present: features.domains_present.clone(),
        domains_omitted: features.domains_omitted.clone(),
        execution_mode: cfg.adaptive.mode,
        kernel: family,
        rows: counts,
        artifacts: hashes,
    };
    write_json(&dir.join("manifest.json"), &manifest)?;

    Ok(RunSummary {
        dir,
        features,
        relevance,
        forecast,
        sweep,
        metrics,
        manifest,
    })
}

/// `(model, order, window, forecasts)`.
pub type BaselineRun = (String, usize, Option<usize>, DatedSeries);

/// Baseline forecasts of `target` from row `n_train` on.
pub fn run_benchmarks(
    target: &DatedSeries,
    n_train: usize,
    window: usize,
    cfg: &BenchmarkConfig,
) -> Result<Vec<BaselineRun>> {
    let mut out = Vec::new();
    for &p in &cfg.ar_orders {
        out.push(("ar_lookahead".to_string(), p, None, lookahead_ar(target, p, n_train)?));
        out.push((
            "ar_adaptive".to_string(),
            p,
            Some(window),
            adaptive_ar(target, p, window)?,
        ));
    }
    let train = &target.values()[..n_train];
    for &p in &cfg.kf_orders {
        let (q, r) = if cfg.tune_kalman {
            let (qg, rg) = default_kalman_grid(train);
            let t = tune_kalman(train, p, &qg, &rg)?;
            (t.q, t.r)
        } else {
            kalman_defaults(train)
        };
        out.push(("kf".to_string(), p, None, kalman_forecasts(target, p, q, r, n_train)?));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn percentile_interpolates() {
        let v = [4.0, 1.0, 3.0, 2.0];
        assert_eq!(percentile(&v, 0.0), 1.0);
        assert_eq!(percentile(&v, 100.0), 4.0);
        assert_eq!(percentile(&v, 50.0), 2.5);
    }

    #[test]
    fn config_parses_sections_and_rejects_unknown_keys() {
        let cfg = RunConfig::from_toml_str(
            r#"
            [data]
            prices = "p.csv"
            [split]
            train_end = "2014-12-31"
            [model]
            kernel = "se"
            seed = 9
            [adaptive]
            sweep = [150, 250]
            mode = "parallel"
            "#,
            Path::new("/tmp/x"),
        )
        .unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.model.kernel, KernelFamily::SquaredExponential);
        assert_eq!(cfg.adaptive.mode, ExecutionMode::Parallel);
        assert_eq!(cfg.resolve(Path::new("p.csv")), PathBuf::from("/tmp/x/p.csv"));
        assert!(RunConfig::from_toml_str("[model]\nkernal = \"se\"\n", Path::new(".")).is_err());
    }

    #[test]
    fn config_requires_prices_and_split() {
        let cfg = RunConfig::default();
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn hash_tracks_content() {
        let a = RunConfig::default();
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.model.seed = 1;
        assert_ne!(a.hash(), b.hash());
    }
}
