use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Date = NaiveDate;

/// A date-indexed sequence of finite scalar observations.
///
/// Dates are strictly increasing and every value is finite; both are checked
/// on construction, so downstream code can rely on them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatedSeries {
    name: String,
    dates: Vec<Date>,
    values: Vec<f64>,
}

impl DatedSeries {
    pub fn new(name: impl Into<String>, dates: Vec<Date>, values: Vec<f64>) -> Result<Self> {
        let name = name.into();
        if dates.len() != values.len() {
            return Err(Error::Shape {
                expected: dates.len(),
                got: values.len(),
            });
        }
        if let Some(w) = dates.windows(2).find(|w| w[0] >= w[1]) {
            return Err(Error::Validation(format!(
                "series `{name}`: dates not strictly increasing at {} -> {}",
                w[0], w[1]
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Validation(format!(
                "series `{name}`: non-finite value at {}",
                dates[i]
            )));
        }
        Ok(Self { name, dates, values })
    }

    /// Builds a series from unordered `(date, value)` pairs, sorting by date.
    /// Duplicate dates are rejected.
    pub fn from_unsorted(name: impl Into<String>, mut pairs: Vec<(Date, f64)>) -> Result<Self> {
        let name = name.into();
        pairs.sort_by_key(|p| p.0);
        if let Some(w) = pairs.windows(2).find(|w| w[0].0 == w[1].0) {
            return Err(Error::Validation(format!("series `{name}`: duplicate date {}", w[0].0)));
        }
        let (dates, values) = pairs.into_iter().unzip();
        Self::new(name, dates, values)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dates(&self) -> &[Date] {
        &self.dates
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn first_date(&self) -> Option<Date> {
        self.dates.first().copied()
    }

    pub fn last_date(&self) -> Option<Date> {
        self.dates.last().copied()
    }

    pub fn renamed(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn get(&self, date: Date) -> Option<f64> {
        self.dates.binary_search(&date).ok().map(|i| self.values[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = (Date, f64)> + '_ {
        self.dates.iter().copied().zip(self.values.iter().copied())
    }

    /// Suffix starting at `start` (by position).
    pub fn tail_from(&self, start: usize) -> DatedSeries {
        let start = start.min(self.len());
        DatedSeries {
            name: self.name.clone(),
            dates: self.dates[start..].to_vec(),
            values: self.values[start..].to_vec(),
        }
    }

    /// Restricts the series to the dates in `index` (which must be sorted).
    /// Dates missing from the series are skipped.
    pub fn restrict_to(&self, index: &[Date]) -> DatedSeries {
        let mut dates = Vec::with_capacity(index.len());
        let mut values = Vec::with_capacity(index.len());
        for &d in index {
            if let Some(v) = self.get(d) {
                dates.push(d);
                values.push(v);
            }
        }
        DatedSeries {
            name: self.name.clone(),
            dates,
            values,
        }
    }

    /// Elementwise map preserving the date index. The mapped values must be finite.
    pub fn map(&self, name: impl Into<String>, f: impl Fn(f64) -> f64) -> Result<DatedSeries> {
        DatedSeries::new(name, self.dates.clone(), self.values.iter().map(|&v| f(v)).collect())
    }
}
