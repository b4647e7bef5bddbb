//! CSV loaders for the four raw data domains and date alignment.
//!
//! Schemas (UTF-8, header row required, ISO-8601 dates):
//!
//! | file           | columns                                 |
//! |----------------|-----------------------------------------|
//! | prices.csv     | `date,close`                            |
//! | sentiment.csv  | `date,stocktwits,twitter`               |
//! | options.csv    | `date,expiry,strike,call_oi,put_oi`     |
//! | brokers.csv    | `date,ticker,weight,state,change`       |

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{csv_io, parse_f64};
use crate::series::{Date, DatedSeries};

/// What to do with an empty numeric cell.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MissingPolicy {
    #[default]
    Reject,
    /// Carry the previous row's value forward; a gap in the first row is still rejected.
    ForwardFill,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptionEntry {
    pub strike: f64,
    pub expiry: Date,
    pub call_oi: f64,
    pub put_oi: f64,
}

/// One trading day's open-interest surface over (strike, expiry).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptionsChainSnapshot {
    pub date: Date,
    pub entries: Vec<OptionEntry>,
}

impl OptionsChainSnapshot {
    pub fn new(date: Date, entries: Vec<OptionEntry>) -> Result<Self> {
        let mut keys = HashSet::with_capacity(entries.len());
        for e in &entries {
            if e.expiry < date {
                return Err(Error::Validation(format!(
                    "options snapshot {date}: expiry {} precedes snapshot date",
                    e.expiry
                )));
            }
            if !(e.strike.is_finite() && e.strike > 0.0) {
                return Err(Error::Validation(format!(
                    "options snapshot {date}: invalid strike {}",
                    e.strike
                )));
            }
            for oi in [e.call_oi, e.put_oi] {
                if !(oi.is_finite() && oi >= 0.0) {
                    return Err(Error::Validation(format!(
                        "options snapshot {date}: invalid open interest {oi}"
                    )));
                }
            }
            if !keys.insert((e.strike.to_bits(), e.expiry)) {
                return Err(Error::Validation(format!(
                    "options snapshot {date}: duplicate (strike {}, expiry {})",
                    e.strike, e.expiry
                )));
            }
        }
        Ok(Self { date, entries })
    }

    /// Days from the snapshot date to an entry's expiry.
    pub fn days_to_expiry(&self, e: &OptionEntry) -> f64 {
        (e.expiry - self.date).num_days() as f64
    }
}

/// Broker rating: `-1` sell, `0` hold, `+1` buy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BrokerRecord {
    pub date: Date,
    pub ticker: String,
    /// Index weight in [0, 1]. `None` inherits the ticker's last stated weight.
    pub weight: Option<f64>,
    pub state: i8,
    /// `-1` downgrade, `0` none, `+1` upgrade.
    pub change: i8,
}

impl BrokerRecord {
    pub fn validate(&self) -> Result<()> {
        if let Some(w) = self.weight {
            if !(0.0..=1.0).contains(&w) {
                return Err(Error::Validation(format!(
                    "broker record {} {}: weight {w} outside [0, 1]",
                    self.date, self.ticker
                )));
            }
        }
        if !(-1..=1).contains(&self.state) || !(-1..=1).contains(&self.change) {
            return Err(Error::Validation(format!(
                "broker record {} {}: state/change must be in {{-1, 0, 1}}",
                self.date, self.ticker
            )));
        }
        Ok(())
    }
}

struct Table {
    header: Vec<String>,
    rows: Vec<(u64, Vec<String>)>,
}

fn read_table(path: &Path, expected: &[&str]) -> Result<Table> {
    let mut r = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_io(path, e))?;
    let header: Vec<String> = r
        .headers()
        .map_err(|e| csv_io(path, e))?
        .iter()
        .map(str::to_string)
        .collect();
    if header != expected {
        return Err(Error::Parse {
            path: path.into(),
            line: 1,
            message: format!("expected header `{}`, got `{}`", expected.join(","), header.join(",")),
        });
    }
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| csv_io(path, e))?;
        let line = rec.position().map_or(0, |p| p.line());
        rows.push((line, rec.iter().map(str::to_string).collect()));
    }
    Ok(Table { header, rows })
}

fn parse_date(path: &Path, line: u64, s: &str) -> Result<Date> {
    s.parse::<Date>().map_err(|e| Error::Parse {
        path: path.into(),
        line,
        message: format!("bad date `{s}`: {e}"),
    })
}

fn parse_num(path: &Path, line: u64, s: &str) -> Result<f64> {
    parse_f64(s).map_err(|message| Error::Parse {
        path: path.into(),
        line,
        message,
    })
}

/// Loads `date,<c1>,<c2>,...` into one series per value column, sorted by date.
fn load_wide(path: &Path, columns: &[&str], policy: MissingPolicy) -> Result<Vec<DatedSeries>> {
    let mut expected = vec!["date"];
    expected.extend_from_slice(columns);
    let table = read_table(path, &expected)?;
    let mut rows = Vec::with_capacity(table.rows.len());
    for (line, rec) in &table.rows {
        let date = parse_date(path, *line, &rec[0])?;
        let vals = rec[1..]
            .iter()
            .map(|s| {
                if s.is_empty() {
                    Ok(None)
                } else {
                    parse_num(path, *line, s).map(Some)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push((*line, date, vals));
    }
    rows.sort_by_key(|r| r.1);
    if let Some(w) = rows.windows(2).find(|w| w[0].1 == w[1].1) {
        return Err(Error::Validation(format!(
            "{}: duplicate date {} (line {})",
            path.display(),
            w[1].1,
            w[1].0
        )));
    }
    let dates: Vec<Date> = rows.iter().map(|r| r.1).collect();
    let mut out = Vec::with_capacity(columns.len());
    for (j, name) in table.header[1..].iter().enumerate() {
        let mut values = Vec::with_capacity(rows.len());
        for (line, _, vals) in &rows {
            match (vals[j], policy, values.last()) {
                (Some(v), _, _) => values.push(v),
                (None, MissingPolicy::ForwardFill, Some(&prev)) => values.push(prev),
                (None, _, _) => {
                    return Err(Error::Parse {
                        path: path.into(),
                        line: *line,
                        message: format!("missing value for `{name}`"),
                    })
                }
            }
        }
        out.push(DatedSeries::new(name.clone(), dates.clone(), values)?);
    }
    Ok(out)
}

/// Loads one value column of any `date,...` CSV as a series named after
/// the column: `column` when given, otherwise the first after `date`.
pub fn load_series_column(path: &Path, column: Option<&str>) -> Result<DatedSeries> {
    let mut r = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_io(path, e))?;
    let header: Vec<String> = r
        .headers()
        .map_err(|e| csv_io(path, e))?
        .iter()
        .map(str::to_string)
        .collect();
    let header_err = |message: String| Error::Parse {
        path: path.into(),
        line: 1,
        message,
    };
    if header.first().map(String::as_str) != Some("date") || header.len() < 2 {
        return Err(header_err(format!(
            "expected `date` followed by value columns, got `{}`",
            header.join(",")
        )));
    }
    let j = match column {
        Some(c) => header
            .iter()
            .position(|h| h == c)
            .filter(|&j| j > 0)
            .ok_or_else(|| header_err(format!("no column `{c}`")))?,
        None => 1,
    };
    let mut pairs = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| csv_io(path, e))?;
        let line = rec.position().map_or(0, |p| p.line());
        let date = parse_date(path, line, &rec[0])?;
        pairs.push((date, parse_num(path, line, &rec[j])?));
    }
    DatedSeries::from_unsorted(header[j].clone(), pairs)
}

/// Loads closing prices from `date,close`. The series is named `close`.
pub fn load_prices(path: &Path) -> Result<DatedSeries> {
    load_prices_with(path, MissingPolicy::Reject)
}

pub fn load_prices_with(path: &Path, policy: MissingPolicy) -> Result<DatedSeries> {
    let close = load_wide(path, &["close"], policy)?.remove(0);
    if let Some((d, v)) = close.iter().find(|&(_, v)| v <= 0.0) {
        return Err(Error::Validation(format!(
            "{}: non-positive price {v} on {d}",
            path.display()
        )));
    }
    Ok(close)
}

/// Loads `date,stocktwits,twitter`, returning `(stocktwits, twitter)`.
pub fn load_sentiment(path: &Path, policy: MissingPolicy) -> Result<(DatedSeries, DatedSeries)> {
    let mut v = load_wide(path, &["stocktwits", "twitter"], policy)?;
    let twitter = v.pop().unwrap();
    let stocktwits = v.pop().unwrap();
    Ok((stocktwits, twitter))
}

/// Loads `date,expiry,strike,call_oi,put_oi` into per-day snapshots sorted by date.
pub fn load_options(path: &Path) -> Result<Vec<OptionsChainSnapshot>> {
    let table = read_table(path, &["date", "expiry", "strike", "call_oi", "put_oi"])?;
    let mut by_date: BTreeMap<Date, Vec<OptionEntry>> = BTreeMap::new();
    for (line, rec) in &table.rows {
        let date = parse_date(path, *line, &rec[0])?;
        let entry = OptionEntry {
            expiry: parse_date(path, *line, &rec[1])?,
            strike: parse_num(path, *line, &rec[2])?,
            call_oi: parse_num(path, *line, &rec[3])?,
            put_oi: parse_num(path, *line, &rec[4])?,
        };
        by_date.entry(date).or_default().push(entry);
    }
    by_date
        .into_iter()
        .map(|(date, entries)| OptionsChainSnapshot::new(date, entries))
        .collect()
}

/// Loads `date,ticker,weight,state,change`. An empty weight inherits the
/// ticker's previously stated weight.
pub fn load_brokers(path: &Path) -> Result<Vec<BrokerRecord>> {
    let table = read_table(path, &["date", "ticker", "weight", "state", "change"])?;
    let mut out = Vec::with_capacity(table.rows.len());
    for (line, rec) in &table.rows {
        let int = |s: &str| -> Result<i8> {
            s.parse::<i8>().map_err(|_| Error::Parse {
                path: path.into(),
                line: *line,
                message: format!("expected an integer in {{-1, 0, 1}}, got `{s}`"),
            })
        };
        let record = BrokerRecord {
            date: parse_date(path, *line, &rec[0])?,
            ticker: rec[1].clone(),
            weight: if rec[2].is_empty() {
                None
            } else {
                Some(parse_num(path, *line, &rec[2])?)
            },
            state: int(&rec[3])?,
            change: int(&rec[4])?,
        };
        record.validate()?;
        out.push(record);
    }
    out.sort_by(|a, b| (a.date, &a.ticker).cmp(&(b.date, &b.ticker)));
    Ok(out)
}

/// Writes series sharing one date index as `date,<name>,...`.
pub fn write_series_csv(path: &Path, series: &[&DatedSeries]) -> Result<()> {
    let Some(first) = series.first() else {
        return Err(Error::Validation("nothing to write".into()));
    };
    if let Some(s) = series.iter().find(|s| s.dates() != first.dates()) {
        return Err(Error::Validation(format!(
            "series `{}` does not share the date index of `{}`",
            s.name(),
            first.name()
        )));
    }
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_io(path, e))?;
    let mut header = vec!["date".to_string()];
    header.extend(series.iter().map(|s| s.name().to_string()));
    w.write_record(&header).map_err(|e| csv_io(path, e))?;
    for (i, d) in first.dates().iter().enumerate() {
        let mut rec = vec![d.to_string()];
        rec.extend(series.iter().map(|s| s.values()[i].to_string()));
        w.write_record(&rec).map_err(|e| csv_io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_options_csv(path: &Path, snapshots: &[OptionsChainSnapshot]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_io(path, e))?;
    w.write_record(["date", "expiry", "strike", "call_oi", "put_oi"])
        .map_err(|e| csv_io(path, e))?;
    for s in snapshots {
        for e in &s.entries {
            w.write_record([
                s.date.to_string(),
                e.expiry.to_string(),
                e.strike.to_string(),
                e.call_oi.to_string(),
                e.put_oi.to_string(),
            ])
            .map_err(|e| csv_io(path, e))?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_brokers_csv(path: &Path, records: &[BrokerRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_io(path, e))?;
    w.write_record(["date", "ticker", "weight", "state", "change"])
        .map_err(|e| csv_io(path, e))?;
    for r in records {
        w.write_record([
            r.date.to_string(),
            r.ticker.clone(),
            r.weight.map(|v| v.to_string()).unwrap_or_default(),
            r.state.to_string(),
            r.change.to_string(),
        ])
        .map_err(|e| csv_io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Sorted intersection of the date sets of every non-empty source.
pub fn align(series: &[&DatedSeries], snapshots: &[OptionsChainSnapshot]) -> Result<Vec<Date>> {
    let mut sets: Vec<(String, BTreeSet<Date>)> = series
        .iter()
        .filter(|s| !s.is_empty())
        .map(|s| (s.name().to_string(), s.dates().iter().copied().collect()))
        .collect();
    if !snapshots.is_empty() {
        sets.push(("options".into(), snapshots.iter().map(|s| s.date).collect()));
    }
    let Some((_, first)) = sets.first() else {
        return Err(Error::InsufficientData("align: every source is empty".into()));
    };
    let common: Vec<Date> = first
        .iter()
        .copied()
        .filter(|d| sets[1..].iter().all(|(_, s)| s.contains(d)))
        .collect();
    if common.is_empty() {
        let ranges = sets
            .iter()
            .map(|(n, s)| format!("{n} [{} .. {}]", s.first().unwrap(), s.last().unwrap()))
            .collect::<Vec<_>>()
            .join(", ");
        return Err(Error::Alignment(ranges));
    }
    Ok(common)
}

#[cfg(test)]
mod tests {
    use std::io::Write;

    use super::*;

    fn d(s: &str) -> Date {
        s.parse().unwrap()
    }

    fn write_tmp(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn loads_three_prices() {
        let f = write_tmp("date,close\n2013-01-02,1462.42\n2013-01-03,1459.37\n2013-01-04,1466.47\n");
        let s = load_prices(f.path()).unwrap();
        assert_eq!(s.len(), 3);
        assert_eq!(s.name(), "close");
        assert_eq!(s.values(), &[1462.42, 1459.37, 1466.47]);
    }

    #[test]
    fn sorts_out_of_order_rows() {
        let f = write_tmp("date,close\n2013-01-04,1466.47\n2013-01-02,1462.42\n2013-01-03,1459.37\n");
        let s = load_prices(f.path()).unwrap();
        assert_eq!(s.dates(), &[d("2013-01-02"), d("2013-01-03"), d("2013-01-04")]);
        assert_eq!(s.values(), &[1462.42, 1459.37, 1466.47]);
    }

    #[test]
    fn duplicate_date_is_a_validation_error() {
        let f = write_tmp("date,close\n2013-01-02,1\n2013-01-03,2\n2013-01-03,3\n");
        assert!(matches!(load_prices(f.path()), Err(Error::Validation(_))));
    }

    #[test]
    fn malformed_row_names_line() {
        let f = write_tmp("date,close\n2013-01-02,1\n2013-01-03,abc\n");
        match load_prices(f.path()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn non_positive_price_rejected() {
        let f = write_tmp("date,close\n2013-01-02,1\n2013-01-03,0\n");
        assert!(matches!(load_prices(f.path()), Err(Error::Validation(_))));
    }

    #[test]
    fn missing_value_policy() {
        let f = write_tmp("date,stocktwits,twitter\n2013-01-02,1,2\n2013-01-03,,3\n");
        assert!(load_sentiment(f.path(), MissingPolicy::Reject).is_err());
        let (st, tw) = load_sentiment(f.path(), MissingPolicy::ForwardFill).unwrap();
        assert_eq!(st.values(), &[1.0, 1.0]);
        assert_eq!(tw.values(), &[2.0, 3.0]);
    }

    #[test]
    fn options_grouped_and_validated() {
        let f = write_tmp(
            "date,expiry,strike,call_oi,put_oi\n\
             2013-01-03,2013-02-15,1450,10,5\n\
             2013-01-02,2013-02-15,1450,8,4\n\
             2013-01-02,2013-02-15,1500,1,0\n",
        );
        let snaps = load_options(f.path()).unwrap();
        assert_eq!(snaps.len(), 2);
        assert_eq!(snaps[0].date, d("2013-01-02"));
        assert_eq!(snaps[0].entries.len(), 2);

        let bad = write_tmp("date,expiry,strike,call_oi,put_oi\n2013-01-03,2013-01-02,1450,10,5\n");
        assert!(load_options(bad.path()).is_err());
        let dup = write_tmp(
            "date,expiry,strike,call_oi,put_oi\n2013-01-03,2013-02-15,1450,10,5\n2013-01-03,2013-02-15,1450,1,1\n",
        );
        assert!(load_options(dup.path()).is_err());
        let neg = write_tmp("date,expiry,strike,call_oi,put_oi\n2013-01-03,2013-02-15,1450,-1,5\n");
        assert!(load_options(neg.path()).is_err());
    }

    #[test]
    fn brokers_parse_and_validate() {
        let f = write_tmp("date,ticker,weight,state,change\n2013-01-02,AAPL,0.5,1,0\n2013-01-03,AAPL,,0,-1\n");
        let r = load_brokers(f.path()).unwrap();
        assert_eq!(r[1].weight, None);
        assert_eq!(r[1].change, -1);
        let bad = write_tmp("date,ticker,weight,state,change\n2013-01-02,AAPL,0.5,2,0\n");
        assert!(load_brokers(bad.path()).is_err());
        let heavy = write_tmp("date,ticker,weight,state,change\n2013-01-02,AAPL,1.5,1,0\n");
        assert!(load_brokers(heavy.path()).is_err());
    }

    fn series(name: &str, days: &[u32]) -> DatedSeries {
        DatedSeries::new(
            name,
            days.iter().map(|&k| Date::from_ymd_opt(2013, 1, k).unwrap()).collect(),
            days.iter().map(|&k| k as f64).collect(),
        )
        .unwrap()
    }

    #[test]
    fn align_intersects() {
        let a = series("a", &[1, 2, 3]);
        let b = series("b", &[2, 3, 4]);
        let idx = align(&[&a, &b], &[]).unwrap();
        assert_eq!(
            idx,
            vec![
                Date::from_ymd_opt(2013, 1, 2).unwrap(),
                Date::from_ymd_opt(2013, 1, 3).unwrap()
            ]
        );
        assert_eq!(align(&[&a, &a], &[]).unwrap(), a.dates());
    }

    #[test]
    fn align_disjoint_errors_with_ranges() {
        let a = series("a", &[1, 2]);
        let b = series("b", &[5, 6]);
        let err = align(&[&a, &b], &[]).unwrap_err();
        assert!(matches!(err, Error::Alignment(_)));
        assert!(err.to_string().contains("2013-01-05"));
        assert!(align(&[], &[]).is_err());
    }

    #[test]
    fn align_includes_snapshots() {
        let a = series("a", &[1, 2, 3]);
        let snap = OptionsChainSnapshot::new(Date::from_ymd_opt(2013, 1, 2).unwrap(), vec![]).unwrap();
        assert_eq!(
            align(&[&a], &[snap]).unwrap(),
            vec![Date::from_ymd_opt(2013, 1, 2).unwrap()]
        );
    }
}
