//! Sentiment and broker-recommendation features.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::BrokerRecord;
use crate::series::{Date, DatedSeries};

/// One-step difference `s(t) − s(t−1)`, dated at `t`.
pub fn diff1(series: &DatedSeries) -> Result<DatedSeries> {
    if series.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "diff1 of `{}` needs at least 2 points",
            series.name()
        )));
    }
    let v = series.values();
    DatedSeries::new(
        format!("{}_change", series.name()),
        series.dates()[1..].to_vec(),
        v.windows(2).map(|w| w[1] - w[0]).collect(),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentimentFeatures {
    pub stocktwits: DatedSeries,
    pub twitter: DatedSeries,
    pub stocktwits_change: DatedSeries,
    pub twitter_change: DatedSeries,
}

impl SentimentFeatures {
    /// Levels and daily changes on the dates where both indices and both
    /// changes are defined.
    pub fn compute(stocktwits: &DatedSeries, twitter: &DatedSeries) -> Result<Self> {
        let idx = crate::ingest::align(&[stocktwits, twitter], &[])?;
        let st = stocktwits.restrict_to(&idx).renamed("stocktwits");
        let tw = twitter.restrict_to(&idx).renamed("twitter");
        let st_c = diff1(&st)?;
        let tw_c = diff1(&tw)?;
        Ok(Self {
            stocktwits: st.tail_from(1),
            twitter: tw.tail_from(1),
            stocktwits_change: st_c,
            twitter_change: tw_c,
        })
    }

    pub fn as_list(&self) -> [&DatedSeries; 4] {
        [
            &self.stocktwits,
            &self.twitter,
            &self.stocktwits_change,
            &self.twitter_change,
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BrokerIndices {
    pub broker_state: DatedSeries,
    pub broker_change: DatedSeries,
}

impl BrokerIndices {
    pub fn as_list(&self) -> [&DatedSeries; 2] {
        [&self.broker_state, &self.broker_change]
    }
}

/// Weighted broker state and change indices.
///
/// A ticker's rating and weight persist until a later record restates them;
/// its change contributes only on the dates it is recorded. Output dates are
/// `calendar` (from the first record date onward) when given, otherwise the
/// distinct record dates.
pub fn broker_indices(records: &[BrokerRecord], calendar: Option<&[Date]>) -> Result<BrokerIndices> {
    let mut by_date: BTreeMap<Date, Vec<&BrokerRecord>> = BTreeMap::new();
    for r in records {
        r.validate()?;
        by_date.entry(r.date).or_default().push(r);
    }
    let Some(&first) = by_date.keys().next() else {
        return Err(Error::InsufficientData("no broker records".into()));
    };
    let dates: Vec<Date> = match calendar {
        Some(c) => c.iter().copied().filter(|&d| d >= first).collect(),
        None => by_date.keys().copied().collect(),
    };

    // ticker -> (weight, state)
    let mut book: BTreeMap<&str, (f64, i8)> = BTreeMap::new();
    let mut pending = by_date.iter().peekable();
    let mut state_idx = Vec::with_capacity(dates.len());
    let mut change_idx = Vec::with_capacity(dates.len());
    for &day in &dates {
        let mut change = 0.0;
        while let Some((&d, recs)) = pending.peek() {
            if d > day {
                break;
            }
            for r in recs.iter() {
                let weight = match (r.weight, book.get(r.ticker.as_str())) {
                    (Some(w), _) => w,
                    (None, Some(&(w, _))) => w,
                    (None, None) => {
                        return Err(Error::Validation(format!(
                            "broker record {} {}: unknown ticker weight",
                            r.date, r.ticker
                        )))
                    }
                };
                book.insert(r.ticker.as_str(), (weight, r.state));
                // Actions dated between calendar days are folded into the next one.
                change += weight * f64::from(r.change);
            }
            pending.next();
        }
        let total_weight: f64 = book.values().map(|v| v.0).sum();
        if total_weight > 1.0 + 1e-9 {
            return Err(Error::Validation(format!(
                "broker weights sum to {total_weight} on {day}"
            )));
        }
        state_idx.push(book.values().map(|&(w, s)| w * f64::from(s)).sum::<f64>());
        change_idx.push(change);
    }
    Ok(BrokerIndices {
        broker_state: DatedSeries::new("broker_state", dates.clone(), state_idx)?,
        broker_change: DatedSeries::new("broker_change", dates, change_idx)?,
    })
}
