//! Synthetic data with planted structure: a feature matrix for relevance
//! studies and a raw four-domain market for end-to-end runs.

use std::path::Path;

use chrono::{Datelike, Days, Weekday};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{self, BrokerRecord, OptionEntry, OptionsChainSnapshot};
use crate::matrix::{Column, FeatureMatrix};
use crate::series::{Date, DatedSeries};

/// Mean and sd of |z| for standard normal z, used to standardize the
/// sign-flip contribution.
const HALF_NORMAL_MEAN: f64 = 0.797_884_560_802_865_4;
const HALF_NORMAL_SD: f64 = 0.602_810_275_123_197_5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n_days: usize,
    pub n_relevant: usize,
    pub n_irrelevant: usize,
    pub signal_to_noise: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_days < 2 {
            return Err(Error::Validation(format!("n_days must be >= 2, got {}", self.n_days)));
        }
        if !(self.signal_to_noise.is_finite() && self.signal_to_noise > 0.0) {
            return Err(Error::Validation(format!(
                "signal_to_noise must be positive, got {}",
                self.signal_to_noise
            )));
        }
        Ok(())
    }
}

/// What was planted in a synthetic matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub relevant: Vec<String>,
    pub irrelevant: Vec<String>,
    /// The relevant column entering through |x| rather than x.
    pub nonlinear: Option<String>,
    pub weights: Vec<f64>,
    pub noise_variance: f64,
    pub seed: u64,
}

/// Weekday calendar of `n` dates starting at the first weekday `>= start`.
pub fn weekday_calendar(start: Date, n: usize) -> Vec<Date> {
    let mut out = Vec::with_capacity(n);
    let mut d = start;
    while out.len() < n {
        if !matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
            out.push(d);
        }
        d = d + Days::new(1);
    }
    out
}

fn default_start() -> Date {
    Date::from_ymd_opt(2013, 1, 2).expect("valid date")
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// Features are i.i.d. N(0, 1). Each relevant feature contributes with unit
/// weight and unit variance: linearly, except the last of two or more,
/// which enters as standardized |x| (its sign carries no information).
/// Noise variance is `n_relevant / signal_to_noise`, or 1 with no relevant
/// features.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<(FeatureMatrix, GroundTruth)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = spec.n_days;
    let d = spec.n_relevant + spec.n_irrelevant;
    let noise_variance = if spec.n_relevant == 0 {
        1.0
    } else {
        spec.n_relevant as f64 / spec.signal_to_noise
    };
    let noise_sd = noise_variance.sqrt();
    let nonlinear_idx = (spec.n_relevant >= 2).then(|| spec.n_relevant - 1);

    let mut cols = vec![Vec::with_capacity(n); d];
    let mut target = Vec::with_capacity(n);
    for _ in 0..n {
        let mut y = 0.0;
        for (j, col) in cols.iter_mut().enumerate() {
            let v = normal(&mut rng);
            col.push(v);
            if j < spec.n_relevant {
                y += if Some(j) == nonlinear_idx {
                    (v.abs() - HALF_NORMAL_MEAN) / HALF_NORMAL_SD
                } else {
                    v
                };
            }
        }
        target.push(y + noise_sd * normal(&mut rng));
    }
    let names: Vec<String> = (0..spec.n_relevant)
        .map(|i| format!("rel_{i}"))
        .chain((0..spec.n_irrelevant).map(|i| format!("irr_{i}")))
        .collect();
    let columns = names
        .iter()
        .zip(cols)
        .map(|(name, v)| Column::new(name.clone(), v))
        .collect();
    let matrix = FeatureMatrix::new(weekday_calendar(default_start(), n), columns, target)?;
    let truth = GroundTruth {
        relevant: names[..spec.n_relevant].to_vec(),
        irrelevant: names[spec.n_relevant..].to_vec(),
        nonlinear: nonlinear_idx.map(|i| names[i].clone()),
        weights: vec![1.0; spec.n_relevant],
        noise_variance,
        seed: spec.seed,
    };
    Ok((matrix, truth))
}

/// Raw inputs for all four domains.
#[derive(Debug, Clone, PartialEq)]
pub struct MarketData {
    pub prices: DatedSeries,
    pub stocktwits: DatedSeries,
    pub twitter: DatedSeries,
    pub options: Vec<OptionsChainSnapshot>,
    pub brokers: Vec<BrokerRecord>,
}

/// Coefficients planted into a synthetic market.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarketSpec {
    pub n_days: usize,
    pub seed: u64,
    /// Loading of next-day standardized return on the Stocktwits level.
    pub stocktwits_loading: f64,
    /// Loading on standardized |Stocktwits|.
    pub stocktwits_abs_loading: f64,
    /// Loading on standardized Directionality.
    pub directionality_loading: f64,
    /// Return volatility scales as exp(−κ·v) with latent viscosity v.
    pub viscosity_damping: f64,
    /// Expiry discount at which Directionality is planted exactly.
    pub gamma_d: f64,
    pub base_volatility: f64,
}

impl MarketSpec {
    pub fn new(n_days: usize, seed: u64) -> Self {
        Self {
            n_days,
            seed,
            stocktwits_loading: 0.4,
            stocktwits_abs_loading: 0.25,
            directionality_loading: 0.35,
            viscosity_damping: 0.3,
            gamma_d: 0.02,
            base_volatility: 0.008,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_days < 60 {
            return Err(Error::Validation(format!(
                "a synthetic market needs at least 60 days, got {}",
                self.n_days
            )));
        }
        let explained =
            self.stocktwits_loading.powi(2) + self.stocktwits_abs_loading.powi(2) + self.directionality_loading.powi(2);
        if !(explained < 1.0) {
            return Err(Error::Validation(format!(
                "planted loadings explain {explained} of the variance; must be < 1"
            )));
        }
        Ok(())
    }
}

/// Standard deviation of the planted daily change in net open interest.
const NET_OI_STEP: f64 = 150.0;
const STRIKE_STEP: f64 = 10.0;
const N_TICKERS: usize = 12;

/// The 20th of the month, for the next two months with an expiry on or
/// after `date`.
fn expiries(date: Date) -> [Date; 2] {
    let mut y = date.year();
    let mut m = date.month();
    if date.day() > 20 {
        (y, m) = if m == 12 { (y + 1, 1) } else { (y, m + 1) };
    }
    let first = Date::from_ymd_opt(y, m, 20).expect("valid date");
    let (y2, m2) = if m == 12 { (y + 1, 1) } else { (y, m + 1) };
    [first, Date::from_ymd_opt(y2, m2, 20).expect("valid date")]
}

/// A market in which the next-day return loads on the Stocktwits level, on
/// |Stocktwits| and on Directionality, while its volatility falls with the
/// straddle open interest that drives Viscosity. Twitter is a noisy echo of
/// Stocktwits and brokers revise ratings at random.
pub fn generate_market(spec: &MarketSpec) -> Result<MarketData> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = spec.n_days;
    let dates = weekday_calendar(default_start(), n);
    let resid = (1.0
        - spec.stocktwits_loading.powi(2)
        - spec.stocktwits_abs_loading.powi(2)
        - spec.directionality_loading.powi(2))
    .sqrt();

    let weights: Vec<f64> = {
        let raw: Vec<f64> = (0..N_TICKERS).map(|_| rng.random_range(0.5..1.5)).collect();
        let total: f64 = raw.iter().sum();
        raw.iter().map(|w| 0.9 * w / total).collect()
    };
    let mut states: Vec<i8> = (0..N_TICKERS).map(|_| rng.random_range(-1..=1)).collect();

    let mut prices = Vec::with_capacity(n);
    let mut st = Vec::with_capacity(n);
    let mut tw = Vec::with_capacity(n);
    let mut options = Vec::with_capacity(n);
    let mut brokers = Vec::new();

    let mut price = 1450.0;
    let (mut s, mut v, mut level) = (0.0f64, 0.0f64, 0.0f64);
    for (i, &date) in dates.iter().enumerate() {
        s = 0.5 * s + 0.75f64.sqrt() * normal(&mut rng);
        let t = 0.4 * s + 0.84f64.sqrt() * normal(&mut rng);
        v = 0.8 * v + 0.6 * normal(&mut rng);
        let step = normal(&mut rng);
        level += NET_OI_STEP * step;

        // Options chain: straddle OI scaled by e^v around the money, with the
        // net call-minus-put position on the nearest-expiry at-the-money strike.
        let atm = (price / STRIKE_STEP).round() * STRIKE_STEP;
        let exps = expiries(date);
        let mut entries = Vec::with_capacity(14);
        for (k, &expiry) in exps.iter().enumerate() {
            for j in -3i32..=3 {
                let strike = atm + f64::from(j) * STRIKE_STEP;
                let moneyness = (strike - price) / 30.0;
                let wobble: f64 = rng.random_range(0.9..1.1);
                let base = (2000.0 * v.exp() * (-moneyness * moneyness).exp() * wobble).round();
                let (mut call, mut put) = (base, base);
                if k == 0 && j == 0 {
                    let tau = (expiry - date).num_days() as f64;
                    let net = (level * (spec.gamma_d * tau).exp()).round();
                    if net > 0.0 {
                        call += net;
                    } else {
                        put -= net;
                    }
                }
                entries.push(OptionEntry {
                    strike,
                    expiry,
                    call_oi: call,
                    put_oi: put,
                });
            }
        }
        options.push(OptionsChainSnapshot::new(date, entries)?);

        // Brokers: full book on day one, then occasional rating changes.
        for (k, state) in states.iter_mut().enumerate() {
            let ticker = format!("T{k:02}");
            if i == 0 {
                brokers.push(BrokerRecord {
                    date,
                    ticker,
                    weight: Some(weights[k]),
                    state: *state,
                    change: 0,
                });
            } else if rng.random_bool(0.03) {
                let choices: Vec<i8> = [-1i8, 0, 1].into_iter().filter(|c| c != state).collect();
                let new = choices[rng.random_range(0..choices.len())];
                brokers.push(BrokerRecord {
                    date,
                    ticker,
                    weight: None,
                    state: new,
                    change: (new - *state).signum(),
                });
                *state = new;
            }
        }

        prices.push(price);
        st.push(s);
        tw.push(t);
        let z = spec.stocktwits_loading * s
            + spec.stocktwits_abs_loading * (s.abs() - HALF_NORMAL_MEAN) / HALF_NORMAL_SD
            + spec.directionality_loading * step
            + resid * normal(&mut rng);
        price *= (spec.base_volatility * (-spec.viscosity_damping * v).exp() * z).exp();
    }
    Ok(MarketData {
        prices: DatedSeries::new("close", dates.clone(), prices)?,
        stocktwits: DatedSeries::new("stocktwits", dates.clone(), st)?,
        twitter: DatedSeries::new("twitter", dates, tw)?,
        options,
        brokers,
    })
}

impl MarketData {
    /// Writes `prices.csv`, `sentiment.csv`, `options.csv` and `brokers.csv`.
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        ingest::write_series_csv(&dir.join("prices.csv"), &[&self.prices])?;
        ingest::write_series_csv(&dir.join("sentiment.csv"), &[&self.stocktwits, &self.twitter])?;
        ingest::write_options_csv(&dir.join("options.csv"), &self.options)?;
        ingest::write_brokers_csv(&dir.join("brokers.csv"), &self.brokers)
    }
}
