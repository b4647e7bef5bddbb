//! Price-derived indicators: log-returns, SMA, EMA, MACD and Signal Line.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::DatedSeries;

pub const SMA_WINDOW: usize = 50;
pub const MACD_FAST: usize = 12;
pub const MACD_SLOW: usize = 26;
pub const SIGNAL_SPAN: usize = 9;

/// ln(p(t) / p(t-1)), dated at `t`.
pub fn log_returns(prices: &DatedSeries) -> Result<DatedSeries> {
    if prices.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "log_returns needs at least 2 prices, got {}",
            prices.len()
        )));
    }
    if let Some((d, p)) = prices.iter().find(|&(_, p)| p <= 0.0) {
        return Err(Error::Domain(format!("non-positive price {p} on {d}")));
    }
    let v = prices.values();
    let values = v.windows(2).map(|w| (w[1] / w[0]).ln()).collect();
    DatedSeries::new("return_t", prices.dates()[1..].to_vec(), values)
}

/// k-period simple moving average, emitted from index `k - 1`.
pub fn sma(prices: &DatedSeries, k: usize) -> Result<DatedSeries> {
    if k == 0 {
        return Err(Error::Validation("sma window must be >= 1".into()));
    }
    if prices.len() < k {
        return Err(Error::InsufficientData(format!(
            "sma({k}) needs {k} points, got {}",
            prices.len()
        )));
    }
    let v = prices.values();
    let mut out = Vec::with_capacity(v.len() + 1 - k);
    // Re-summing each window keeps the result free of running-sum drift.
    for end in k..=v.len() {
        out.push(v[end - k..end].iter().sum::<f64>() / k as f64);
    }
    DatedSeries::new(format!("sma{k}"), prices.dates()[k - 1..].to_vec(), out)
}

/// Exponential moving average with smoothing 2/(k+1), seeded at the first value.
pub fn ema(series: &DatedSeries, k: usize) -> Result<DatedSeries> {
    if k == 0 {
        return Err(Error::Validation("ema span must be >= 1".into()));
    }
    let v = series.values();
    let Some(&first) = v.first() else {
        return Err(Error::InsufficientData("ema of an empty series".into()));
    };
    let alpha = 2.0 / (k as f64 + 1.0);
    let mut out = Vec::with_capacity(v.len());
    let mut prev = first;
    out.push(prev);
    for &p in &v[1..] {
        prev += (p - prev) * alpha;
        out.push(prev);
    }
    DatedSeries::new(format!("ema{k}"), series.dates().to_vec(), out)
}

/// 12-period EMA minus 26-period EMA.
pub fn macd(prices: &DatedSeries) -> Result<DatedSeries> {
    let fast = ema(prices, MACD_FAST)?;
    let slow = ema(prices, MACD_SLOW)?;
    let values = fast.values().iter().zip(slow.values()).map(|(f, s)| f - s).collect();
    DatedSeries::new("macd", prices.dates().to_vec(), values)
}

/// MACD minus its own 9-period EMA.
///
/// This is the definition used by the feature set here; many charting
/// packages call this quantity the MACD histogram.
pub fn signal_line(prices: &DatedSeries) -> Result<DatedSeries> {
    let m = macd(prices)?;
    let e = ema(&m, SIGNAL_SPAN)?;
    let values = m.values().iter().zip(e.values()).map(|(a, b)| a - b).collect();
    DatedSeries::new("signal_line", prices.dates().to_vec(), values)
}

/// The four technical features on a shared, fully burned-in date index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TechnicalFeatures {
    pub return_t: DatedSeries,
    pub sma50: DatedSeries,
    pub macd: DatedSeries,
    pub signal_line: DatedSeries,
}

impl TechnicalFeatures {
    /// Index of the first price at which every lookback is satisfied.
    pub fn burn_in() -> usize {
        (SMA_WINDOW - 1).max(MACD_SLOW + SIGNAL_SPAN - 2).max(1)
    }

    pub fn compute(prices: &DatedSeries) -> Result<Self> {
        let start = Self::burn_in();
        if prices.len() <= start {
            return Err(Error::InsufficientData(format!(
                "technical features need more than {start} prices, got {}",
                prices.len()
            )));
        }
        let r = log_returns(prices)?;
        let s = sma(prices, SMA_WINDOW)?;
        let m = macd(prices)?;
        let sl = signal_line(prices)?;
        Ok(Self {
            return_t: r.tail_from(start - 1),
            sma50: s.tail_from(start + 1 - SMA_WINDOW).renamed("sma50"),
            macd: m.tail_from(start),
            signal_line: sl.tail_from(start),
        })
    }

    pub fn as_list(&self) -> [&DatedSeries; 4] {
        [&self.return_t, &self.sma50, &self.macd, &self.signal_line]
    }
}
