use std::collections::BTreeMap;
use std::path::Path;

use ardfuse::adaptive::{parse_windows, rolling_forecast, window_sweep, AdaptiveConfig, ExecutionMode};
use ardfuse::benchmarks::{
    adaptive_ar, default_kalman_grid, kalman_defaults, kalman_forecasts, lookahead_ar, tune_kalman,
};
use ardfuse::features::exogenous::{broker_indices, SentimentFeatures};
use ardfuse::features::options::{calibrate, PriceSpaceFeatures, PriceSpaceParams};
use ardfuse::features::technical::TechnicalFeatures;
use ardfuse::gp::{fit_design, ModelSnapshot};
use ardfuse::ingest::{self, MissingPolicy};
use ardfuse::matrix::{add_noise_baseline, center_scale};
use ardfuse::pipeline::{
    build_features, load_raw, next_day_returns, relevance_fit, run_pipeline, surface_grid, RawData, RunConfig,
};
use ardfuse::stats::metrics;
use ardfuse::synthetic::{generate_market, generate_synthetic, MarketSpec, SyntheticSpec};
use ardfuse::{DatedSeries, Distance, Error, FeatureMatrix, FitOptions, Result, NOISE_COLUMN};
use serde::Serialize;
use tracing::info;

use super::*;

fn ensure_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => std::fs::create_dir_all(p).map_err(|e| Error::io(p, e)),
        _ => Ok(()),
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    ensure_parent(path)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    write_text(path, &s)
}

impl From<DistanceArg> for Distance {
    fn from(d: DistanceArg) -> Self {
        match d {
            DistanceArg::Euclidean => Distance::Euclidean,
            DistanceArg::Manhattan => Distance::Manhattan,
        }
    }
}

impl From<ModeArg> for ExecutionMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Serial => ExecutionMode::Serial,
            ModeArg::Parallel => ExecutionMode::Parallel,
        }
    }
}

impl ModelArgs {
    fn fit_options(&self) -> FitOptions {
        FitOptions {
            family: self.kernel,
            distance: self.distance.into(),
            restarts: self.restarts,
            seed: self.seed,
            ..FitOptions::default()
        }
    }

    /// The matrix restricted to `--columns`, and the number of training rows.
    fn load(&self) -> Result<(FeatureMatrix, usize)> {
        let m = FeatureMatrix::read_csv(&self.features)?;
        let m = if self.columns.is_empty() {
            m
        } else {
            m.select_columns(&self.columns)?
        };
        let n_train = match self.train_end {
            Some(d) => m.split_at_date(d),
            None => m.n_rows(),
        };
        if n_train < 2 {
            return Err(Error::InsufficientData(format!("{n_train} training rows")));
        }
        Ok((m, n_train))
    }

    fn adaptive(&self, window: usize, mode: ModeArg) -> AdaptiveConfig {
        AdaptiveConfig {
            distance: self.distance.into(),
            restarts: self.restarts,
            mode: mode.into(),
            ..AdaptiveConfig::new(window, self.kernel, self.seed)
        }
    }
}

/// Test rows end at `test_end` when given; forecasting needs a training
/// split strictly before the end.
fn test_rows(model: &ModelArgs, test_end: Option<Date>) -> Result<(FeatureMatrix, usize)> {
    let (m, n_train) = model.load()?;
    if model.train_end.is_none() {
        return Err(Error::Validation(
            "--train-end is required to define the test rows".into(),
        ));
    }
    let m = match test_end {
        Some(d) => m.rows(0..m.split_at_date(d)),
        None => m,
    };
    if n_train >= m.n_rows() {
        return Err(Error::InsufficientData("no rows after --train-end".into()));
    }
    Ok((m, n_train))
}

pub fn gen(a: GenArgs) -> Result<()> {
    let spec = SyntheticSpec {
        n_days: a.days,
        n_relevant: a.relevant,
        n_irrelevant: a.irrelevant,
        signal_to_noise: a.snr,
        seed: a.seed,
    };
    let (matrix, truth) = generate_synthetic(&spec)?;
    std::fs::create_dir_all(&a.out).map_err(|e| Error::io(&a.out, e))?;
    matrix.write_csv(&a.out.join("synthetic.csv"))?;
    write_json(&a.out.join("truth.json"), &truth)?;
    println!(
        "wrote {} rows to {}",
        matrix.n_rows(),
        a.out.join("synthetic.csv").display()
    );

    if a.days < 120 {
        info!("market generation skipped below 120 days");
        return Ok(());
    }
    let market = generate_market(&MarketSpec::new(a.days, a.seed))?;
    market.write_dir(&a.out)?;
    write_text(&a.out.join("run.toml"), &market_config(&market.prices, a.seed))?;
    println!("wrote market CSVs and run.toml to {}", a.out.display());
    Ok(())
}

/// A config over the generated market: about 87% of the combined rows for
/// training, windows scaled down for short histories.
fn market_config(prices: &DatedSeries, seed: u64) -> String {
    let burn = TechnicalFeatures::burn_in();
    let rows = prices.len() - burn - 1;
    let n_train = ((rows as f64 * 0.87).round() as usize).clamp(2, rows - 1);
    let train_end = prices.dates()[burn + n_train - 1];
    let (window, sweep) = if n_train >= 400 {
        (250, vec![150, 250, 350])
    } else {
        let mut s = vec![(n_train / 4).max(2), (n_train / 2).max(2), (3 * n_train / 4).max(2)];
        s.dedup();
        ((n_train / 2).max(2), s)
    };
    let sweep: Vec<String> = sweep.iter().map(usize::to_string).collect();
    format!(
        r#"[data]
prices = "prices.csv"
sentiment = "sentiment.csv"
options = "options.csv"
brokers = "brokers.csv"

[split]
train_end = "{train_end}"

[model]
kernel = "matern32"
seed = {seed}
restarts = 5
features = ["return_t", "signal_line", "stocktwits", "directionality", "viscosity", "broker_state"]

[adaptive]
window = {window}
sweep = [{sweep}]
# Each window warm-starts from the previous optimum, so two restarts suffice.
restarts = 2
mode = "serial"

[benchmarks]
ar_orders = [1, 3, 10]
kf_orders = [1, 3, 10]

[output]
dir = "run"
"#,
        sweep = sweep.join(", ")
    )
}

fn raw_from_args(a: &FeaturesArgs) -> Result<(RawData, Option<Date>)> {
    let mut cfg = match &a.config {
        Some(p) => RunConfig::from_file(p)?,
        None => RunConfig::default(),
    };
    let d = &mut cfg.data;
    for (slot, flag) in [
        (&mut d.prices, &a.prices),
        (&mut d.sentiment, &a.sentiment),
        (&mut d.options, &a.options),
        (&mut d.brokers, &a.brokers),
    ] {
        if let Some(p) = flag {
            *slot = Some(std::path::absolute(p).map_err(|e| Error::io(p, e))?);
        }
    }
    if a.train_end.is_some() {
        cfg.split.train_end = a.train_end;
    }
    Ok((load_raw(&cfg)?, cfg.split.train_end))
}

fn required<'a, T>(v: &'a Option<T>, what: &str) -> Result<&'a T> {
    v.as_ref()
        .ok_or_else(|| Error::Validation(format!("--{what} is required for this domain")))
}

pub fn features(a: FeaturesArgs) -> Result<()> {
    match a.domain {
        Domain::All => {
            let (raw, train_end) = raw_from_args(&a)?;
            let set = build_features(&raw, train_end)?;
            std::fs::create_dir_all(&a.out).map_err(|e| Error::io(&a.out, e))?;
            let written = set.write(&a.out)?;
            if let Some((_, cal)) = &set.price_space {
                write_json(&a.out.join("price_space.json"), cal)?;
            }
            println!(
                "wrote {} to {} ({} combined rows; omitted: {})",
                written.join(", "),
                a.out.display(),
                set.combined.n_rows(),
                if set.domains_omitted.is_empty() {
                    "none".into()
                } else {
                    set.domains_omitted.join(", ")
                }
            );
        }
        Domain::Technical => {
            let prices = ingest::load_prices(required(&a.prices, "prices")?)?;
            let t = TechnicalFeatures::compute(&prices)?;
            write_series(&a.out, &t.as_list())?;
        }
        Domain::Sentiment => {
            let (st, tw) = ingest::load_sentiment(required(&a.sentiment, "sentiment")?, MissingPolicy::Reject)?;
            let s = SentimentFeatures::compute(&st, &tw)?;
            write_series(&a.out, &s.as_list())?;
        }
        Domain::Broker => {
            let recs = ingest::load_brokers(required(&a.brokers, "brokers")?)?;
            let calendar = a.prices.as_ref().map(|p| ingest::load_prices(p)).transpose()?;
            let b = broker_indices(&recs, calendar.as_ref().map(|c| c.dates()))?;
            write_series(&a.out, &b.as_list())?;
        }
        Domain::Options => {
            let snaps = ingest::load_options(required(&a.options, "options")?)?;
            let prices = ingest::load_prices(required(&a.prices, "prices")?)?;
            let params = if a.fit {
                let next = next_day_returns(&prices)?;
                let (params, gd, vf) = calibrate(&snaps, &prices, &next, a.train_end)?;
                let sidecar = a.out.with_extension("json");
                write_json(
                    &sidecar,
                    &serde_json::json!({
                        "params": params,
                        "directionality": gd,
                        "viscosity": vf,
                        "train_end": a.train_end,
                    }),
                )?;
                println!("calibration written to {}", sidecar.display());
                params
            } else {
                PriceSpaceParams {
                    gamma_d: a.gamma_d.unwrap_or(0.0),
                    lambda_v: a.lambda_v.unwrap_or(0.0),
                    gamma_v: a.gamma_v.unwrap_or(0.0),
                }
            };
            let f = PriceSpaceFeatures::compute(&snaps, &prices, &params)?;
            write_series(&a.out, &[&f.directionality, &f.viscosity])?;
        }
    }
    Ok(())
}

fn write_series(path: &Path, series: &[&DatedSeries]) -> Result<()> {
    ensure_parent(path)?;
    ingest::write_series_csv(path, series)?;
    println!("wrote {} rows to {}", series[0].len(), path.display());
    Ok(())
}

pub fn relevance(a: RelevanceArgs) -> Result<()> {
    let (m, n_train) = a.model.load()?;
    let train = m.rows(0..n_train);
    let opts = a.model.fit_options();
    let (_, first, _) = relevance_fit(&train, &opts)?;
    print_ranking(&first);

    // Single-pass pruning: keep the salient features and refit.
    let mut passes = Vec::new();
    let mut current = first.report.salient_names();
    let mut columns: Vec<String> = train.names().into_iter().map(String::from).collect();
    for _ in 0..a.prune_iterations {
        if current.is_empty() || current.len() == columns.len() {
            break;
        }
        let (_, out, _) = relevance_fit(&train.select_columns(&current)?, &opts)?;
        info!(kept = current.len(), "refit on salient features");
        columns = current;
        current = out.report.salient_names();
        passes.push(out);
    }
    let mut json = serde_json::to_value(&first)?;
    json["pruning"] = serde_json::to_value(&passes)?;
    write_json(&a.out, &json)
}

fn print_ranking(out: &ardfuse::pipeline::RelevanceOutput) {
    println!("{:<20} {:>14} {:>12}  salient", "feature", "length_scale", "ratio");
    for e in &out.report.entries {
        println!(
            "{:<20} {:>14.6e} {:>12.4}  {}",
            e.name,
            e.length_scale,
            e.ratio,
            if e.is_noise {
                "-"
            } else if e.salient {
                "yes"
            } else {
                "no"
            }
        );
    }
}

pub fn train(a: TrainArgs) -> Result<()> {
    let (m, n_train) = a.model.load()?;
    let (scaled, std) = center_scale(&m.rows(0..n_train))?;
    let scaled = if a.noise_baseline {
        add_noise_baseline(&scaled, a.model.seed)?
    } else {
        scaled
    };
    let names = scaled.names().into_iter().map(String::from).collect();
    let (model, diag) = fit_design(scaled.design(), scaled.target(), names, &a.model.fit_options())?;
    write_json(&a.out, &model.snapshot(Some(std)))?;
    println!(
        "fitted {} on {} rows, log marginal likelihood {:.4}; snapshot in {}",
        a.model.kernel.name(),
        n_train,
        diag.lml,
        a.out.display()
    );
    Ok(())
}

pub fn forecast(a: ForecastArgs) -> Result<()> {
    let (m, n_train) = test_rows(&a.model, a.test_end)?;
    let f = rolling_forecast(&m, &a.model.adaptive(a.window, a.mode), n_train)?;
    write_text(&a.out, &f.to_csv())?;
    let r = f.metrics()?;
    println!(
        "{} forecasts ({} gaps): corr {:.4} (p {:.4}), MAD {:.2} bp, NRMSE {:.4}",
        f.dates.len(),
        f.gaps.len(),
        r.pearson_corr,
        r.p_value,
        r.mad_bp,
        r.nrmse
    );
    Ok(())
}

pub fn sweep(a: SweepArgs) -> Result<()> {
    let (m, n_train) = test_rows(&a.model, a.test_end)?;
    let windows = parse_windows(&a.windows)?;
    let cfg = a.model.adaptive(windows[0], a.mode);
    let s = window_sweep(&m, &cfg, &windows, n_train, None)?;
    write_text(&a.out, &s.to_csv())?;
    if let Some(b) = s.best() {
        println!("best window {} of {}", b.window, s.rows.len());
    }
    Ok(())
}

pub fn benchmark(a: BenchmarkArgs) -> Result<()> {
    let series = ingest::load_series_column(&a.returns, a.column.as_deref())?;
    let n_train = a.train_end.map(|d| series.dates().partition_point(|x| *x <= d));
    let forecasts = match a.model {
        BaselineModel::Ar => match (a.window, n_train) {
            (Some(w), _) => adaptive_ar(&series, a.order, w)?,
            (None, Some(n)) => lookahead_ar(&series, a.order, n)?,
            (None, None) => {
                return Err(Error::Validation("ar needs --window or --train-end".into()));
            }
        },
        BaselineModel::Kf => {
            let start = n_train.unwrap_or(a.order);
            let train = &series.values()[..start];
            let (q, r) = match (a.q, a.r) {
                (Some(q), Some(r)) => (q, r),
                _ if n_train.is_some() => {
                    let (qg, rg) = default_kalman_grid(train);
                    let t = tune_kalman(train, a.order, &qg, &rg)?;
                    (a.q.unwrap_or(t.q), a.r.unwrap_or(t.r))
                }
                _ => {
                    let (q, r) = kalman_defaults(series.values());
                    (a.q.unwrap_or(q), a.r.unwrap_or(r))
                }
            };
            info!(q, r, "kalman noise");
            kalman_forecasts(&series, a.order, q, r, start)?
        }
    };
    let mut s = String::from("date,forecast,observed\n");
    for (d, f) in forecasts.iter() {
        let o = series.get(d).expect("forecasts are dated on series dates");
        s.push_str(&format!("{d},{f},{o}\n"));
    }
    write_text(&a.out, &s)?;
    println!("wrote {} forecasts to {}", forecasts.len(), a.out.display());
    Ok(())
}

fn load_named_or_first(path: &Path, column: &str) -> Result<DatedSeries> {
    ingest::load_series_column(path, Some(column)).or_else(|e| match e {
        Error::Parse { line: 1, .. } => ingest::load_series_column(path, None),
        e => Err(e),
    })
}

pub fn report(a: ReportArgs) -> Result<()> {
    let f = load_named_or_first(&a.forecasts, &a.forecast_column)?;
    let o = load_named_or_first(&a.observed, &a.observed_column)?;
    let obs: BTreeMap<Date, f64> = o.iter().collect();
    let (fx, ox): (Vec<f64>, Vec<f64>) = f.iter().filter_map(|(d, v)| obs.get(&d).map(|w| (v, *w))).unzip();
    if fx.len() < f.len() {
        info!(dropped = f.len() - fx.len(), "forecast dates without an observation");
    }
    let r = metrics(&fx, &ox)?;
    let json = serde_json::to_string_pretty(&r)?;
    match &a.out {
        Some(p) => write_json(p, &r)?,
        None => println!("{json}"),
    }
    Ok(())
}

pub fn surface(a: SurfaceArgs) -> Result<()> {
    let text = std::fs::read_to_string(&a.model).map_err(|e| Error::io(&a.model, e))?;
    let snap: ModelSnapshot = serde_json::from_str(&text)?;
    let (model, _) = snap.into_model()?;
    if a.x == NOISE_COLUMN || a.y == NOISE_COLUMN {
        return Err(Error::Validation("the noise baseline is not a surface axis".into()));
    }
    let grid = surface_grid(&model, &a.x, &a.y, a.resolution)?;
    write_json(&a.out, &grid)?;
    println!("{0}x{0} grid written to {1}", a.resolution, a.out.display());
    Ok(())
}

pub fn run(a: RunArgs) -> Result<()> {
    let mut cfg = RunConfig::from_file(&a.config)?;
    if let Some(s) = a.seed {
        cfg.model.seed = s;
    }
    if let Some(k) = a.kernel {
        cfg.model.kernel = k;
    }
    if let Some(w) = a.window {
        cfg.adaptive.window = w;
    }
    if let Some(r) = a.restarts {
        cfg.model.restarts = r;
        cfg.adaptive.restarts = r;
    }
    if let Some(m) = a.mode {
        cfg.adaptive.mode = m.into();
    }
    if a.train_end.is_some() {
        cfg.split.train_end = a.train_end;
    }
    if let Some(o) = a.out {
        cfg.output.dir = std::path::absolute(&o).map_err(|e| Error::io(&o, e))?;
    }
    let summary = run_pipeline(&cfg)?;
    let m = &summary.metrics;
    println!("run directory: {}", summary.dir.display());
    println!(
        "gp (w={}): corr {:.4} (p {:.4}), MAD {:.2} bp, NRMSE {:.4}",
        m.gp_window, m.gp.pearson_corr, m.gp.p_value, m.gp.mad_bp, m.gp.nrmse
    );
    for b in &m.benchmarks {
        println!("{:<13} p={:<3} NRMSE {:.4}", b.model, b.order, b.metrics.nrmse);
    }
    if let Some(beats) = m.gp_beats_adaptive_ar {
        println!("gp beats best adaptive AR: {beats}");
    }
    Ok(())
}
