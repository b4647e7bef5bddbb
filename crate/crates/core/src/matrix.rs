//! Date-aligned design matrix with a next-step target column.

use std::collections::HashSet;
use std::ops::Range;
use std::path::Path;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::Date;

/// Name of the injected Gaussian-noise baseline column.
pub const NOISE_COLUMN: &str = "__noise__";
pub const TARGET_COLUMN: &str = "target";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    pub values: Vec<f64>,
    /// Set once the column has been centered and scaled.
    pub standardized: bool,
}

impl Column {
    pub fn new(name: impl Into<String>, values: Vec<f64>) -> Self {
        Self {
            name: name.into(),
            values,
            standardized: false,
        }
    }
}

/// Named feature columns over a shared date index, plus the target.
///
/// Row `t` holds features known at the close of `dates[t]`; `target[t]` is the
/// return realized over the following step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    dates: Vec<Date>,
    columns: Vec<Column>,
    target: Vec<f64>,
}

impl FeatureMatrix {
    pub fn new(dates: Vec<Date>, columns: Vec<Column>, target: Vec<f64>) -> Result<Self> {
        let n = dates.len();
        if target.len() != n {
            return Err(Error::Shape {
                expected: n,
                got: target.len(),
            });
        }
        if let Some(w) = dates.windows(2).find(|w| w[0] >= w[1]) {
            return Err(Error::Validation(format!(
                "feature matrix dates not strictly increasing at {}",
                w[1]
            )));
        }
        let mut seen = HashSet::new();
        for c in &columns {
            if !seen.insert(c.name.as_str()) {
                return Err(Error::Validation(format!("duplicate column `{}`", c.name)));
            }
            if c.name == TARGET_COLUMN || c.name == "date" {
                return Err(Error::Validation(format!("reserved column name `{}`", c.name)));
            }
            if c.values.len() != n {
                return Err(Error::Shape {
                    expected: n,
                    got: c.values.len(),
                });
            }
            if let Some(i) = c.values.iter().position(|v| !v.is_finite()) {
                return Err(Error::Validation(format!(
                    "column `{}` has a non-finite entry at row {i}",
                    c.name
                )));
            }
        }
        if let Some(i) = target.iter().position(|v| !v.is_finite()) {
            return Err(Error::Validation(format!("target non-finite at row {i}")));
        }
        Ok(Self { dates, columns, target })
    }

    pub fn n_rows(&self) -> usize {
        self.dates.len()
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn dates(&self) -> &[Date] {
        &self.dates
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn target(&self) -> &[f64] {
        &self.target
    }

    pub fn names(&self) -> Vec<&str> {
        self.columns.iter().map(|c| c.name.as_str()).collect()
    }

    pub fn column(&self, name: &str) -> Option<&Column> {
        self.columns.iter().find(|c| c.name == name)
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    /// Row `i` as a feature vector in column order.
    pub fn row(&self, i: usize) -> Vec<f64> {
        self.columns.iter().map(|c| c.values[i]).collect()
    }

    /// n × d design matrix in column order.
    pub fn design(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n_rows(), self.n_cols(), |i, j| self.columns[j].values[i])
    }

    pub fn rows(&self, range: Range<usize>) -> FeatureMatrix {
        FeatureMatrix {
            dates: self.dates[range.clone()].to_vec(),
            columns: self
                .columns
                .iter()
                .map(|c| Column {
                    name: c.name.clone(),
                    values: c.values[range.clone()].to_vec(),
                    standardized: c.standardized,
                })
                .collect(),
            target: self.target[range].to_vec(),
        }
    }

    /// Rows whose positions are listed in `idx`, in that order.
    pub fn take_rows(&self, idx: &[usize]) -> FeatureMatrix {
        FeatureMatrix {
            dates: idx.iter().map(|&i| self.dates[i]).collect(),
            columns: self
                .columns
                .iter()
                .map(|c| Column {
                    name: c.name.clone(),
                    values: idx.iter().map(|&i| c.values[i]).collect(),
                    standardized: c.standardized,
                })
                .collect(),
            target: idx.iter().map(|&i| self.target[i]).collect(),
        }
    }

    pub fn select_columns<S: AsRef<str>>(&self, names: &[S]) -> Result<FeatureMatrix> {
        let columns = names
            .iter()
            .map(|n| {
                self.column(n.as_ref())
                    .cloned()
                    .ok_or_else(|| Error::Validation(format!("unknown feature `{}`", n.as_ref())))
            })
            .collect::<Result<Vec<_>>>()?;
        FeatureMatrix::new(self.dates.clone(), columns, self.target.clone())
    }

    pub fn with_column(&self, column: Column) -> Result<FeatureMatrix> {
        let mut columns = self.columns.clone();
        columns.push(column);
        FeatureMatrix::new(self.dates.clone(), columns, self.target.clone())
    }

    /// Swaps in `column` for the existing column of the same name.
    pub fn replace_column(&self, column: Column) -> Result<FeatureMatrix> {
        let i = self
            .column_index(&column.name)
            .ok_or_else(|| Error::Validation(format!("unknown feature `{}`", column.name)))?;
        let mut columns = self.columns.clone();
        columns[i] = column;
        FeatureMatrix::new(self.dates.clone(), columns, self.target.clone())
    }

    pub fn with_target(&self, target: Vec<f64>) -> Result<FeatureMatrix> {
        FeatureMatrix::new(self.dates.clone(), self.columns.clone(), target)
    }

    /// Rows with `dates[i] <= cutoff`.
    pub fn split_at_date(&self, cutoff: Date) -> usize {
        self.dates.partition_point(|&d| d <= cutoff)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| csv_io(path, e))?;
        let mut header = vec!["date".to_string()];
        header.extend(self.columns.iter().map(|c| c.name.clone()));
        header.push(TARGET_COLUMN.to_string());
        w.write_record(&header).map_err(|e| csv_io(path, e))?;
        for i in 0..self.n_rows() {
            let mut rec = vec![self.dates[i].to_string()];
            rec.extend(self.columns.iter().map(|c| c.values[i].to_string()));
            rec.push(self.target[i].to_string());
            w.write_record(&rec).map_err(|e| csv_io(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    /// Reads `date,<features...>,target`.
    pub fn read_csv(path: &Path) -> Result<FeatureMatrix> {
        let mut r = csv::Reader::from_path(path).map_err(|e| csv_io(path, e))?;
        let header: Vec<String> = r
            .headers()
            .map_err(|e| csv_io(path, e))?
            .iter()
            .map(|s| s.trim().to_string())
            .collect();
        if header.len() < 2 || header[0] != "date" || header.last().unwrap() != TARGET_COLUMN {
            return Err(Error::Parse {
                path: path.into(),
                line: 1,
                message: "expected header `date,<features...>,target`".into(),
            });
        }
        let d = header.len() - 2;
        let mut dates = Vec::new();
        let mut cols = vec![Vec::new(); d];
        let mut target = Vec::new();
        for rec in r.records() {
            let rec = rec.map_err(|e| csv_io(path, e))?;
            let line = rec.position().map_or(0, |p| p.line());
            let bad = |message: String| Error::Parse {
                path: path.into(),
                line,
                message,
            };
            if rec.len() != header.len() {
                return Err(bad(format!("expected {} fields, got {}", header.len(), rec.len())));
            }
            dates.push(
                rec[0]
                    .trim()
                    .parse::<Date>()
                    .map_err(|e| bad(format!("bad date `{}`: {e}", &rec[0])))?,
            );
            for j in 0..d {
                cols[j].push(parse_f64(&rec[j + 1]).map_err(&bad)?);
            }
            target.push(parse_f64(&rec[d + 1]).map_err(&bad)?);
        }
        let columns = header[1..=d]
            .iter()
            .zip(cols)
            .map(|(n, v)| Column::new(n.clone(), v))
            .collect();
        FeatureMatrix::new(dates, columns, target)
    }
}

pub(crate) fn parse_f64(s: &str) -> std::result::Result<f64, String> {
    let t = s.trim();
    t.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| format!("bad number `{t}`"))
}

pub(crate) fn csv_io(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line());
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Parse {
            path: path.into(),
            line,
            message: format!("{other:?}"),
        },
    }
}

/// Per-column training statistics used to center and scale features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub names: Vec<String>,
    pub means: Vec<f64>,
    /// Population standard deviations.
    pub sds: Vec<f64>,
}

impl Standardizer {
    pub fn fit(matrix: &FeatureMatrix) -> Result<Self> {
        let mut means = Vec::with_capacity(matrix.n_cols());
        let mut sds = Vec::with_capacity(matrix.n_cols());
        for c in matrix.columns() {
            let (m, sd) = mean_sd(&c.values);
            if !(sd > 0.0) || !sd.is_finite() {
                return Err(Error::Validation(format!(
                    "column `{}` has zero variance on the training rows",
                    c.name
                )));
            }
            means.push(m);
            sds.push(sd);
        }
        Ok(Self {
            names: matrix.names().into_iter().map(String::from).collect(),
            means,
            sds,
        })
    }

    pub fn apply(&self, matrix: &FeatureMatrix) -> Result<FeatureMatrix> {
        let columns = self
            .names
            .iter()
            .enumerate()
            .map(|(j, name)| {
                let c = matrix
                    .column(name)
                    .ok_or_else(|| Error::Validation(format!("missing column `{name}`")))?;
                Ok(Column {
                    name: name.clone(),
                    values: c.values.iter().map(|v| (v - self.means[j]) / self.sds[j]).collect(),
                    standardized: true,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        FeatureMatrix::new(matrix.dates.clone(), columns, matrix.target.clone())
    }

    pub fn apply_row(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .enumerate()
            .map(|(j, v)| (v - self.means[j]) / self.sds[j])
            .collect()
    }
}

/// Centers every column to mean 0 and scales to unit population standard
/// deviation, returning the transform so held-out rows can reuse it.
pub fn center_scale(matrix: &FeatureMatrix) -> Result<(FeatureMatrix, Standardizer)> {
    let s = Standardizer::fit(matrix)?;
    Ok((s.apply(matrix)?, s))
}

/// Appends an i.i.d. standard normal column named [`NOISE_COLUMN`].
pub fn add_noise_baseline(matrix: &FeatureMatrix, seed: u64) -> Result<FeatureMatrix> {
    if matrix.column(NOISE_COLUMN).is_some() {
        return Err(Error::Validation(format!(
            "matrix already has a `{NOISE_COLUMN}` column"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = (0..matrix.n_rows()).map(|_| StandardNormal.sample(&mut rng)).collect();
    matrix.with_column(Column::new(NOISE_COLUMN, values))
}

pub(crate) fn mean_sd(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    if x.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let m = x.iter().sum::<f64>() / n;
    let v = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n;
    (m, v.sqrt())
}
