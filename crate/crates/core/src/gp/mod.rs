//! Gaussian Process regression with ARD kernels.

mod fit;
mod lml;
mod select;

pub use fit::{fit, fit_design, FitDiagnostics, FitOptions};
pub use lml::{log_marginal_likelihood, Hyperparameters, LmlValue};
pub use select::{kfold_kernel_select, CvRow, KernelSelection};

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{cross_covariance, factorize_with_jitter, kernel_matrix, rows_of, KernelSpec};
use crate::matrix::{Standardizer, NOISE_COLUMN};

/// Relevance ratio at or above which a feature counts as salient.
pub const SALIENCE_RATIO: f64 = 100.0;

/// A trained GP: hyperparameters, training data and the cached factorization
/// of `K + σ_n²I`. Immutable once built.
#[derive(Debug, Clone)]
pub struct GpModel {
    kernel: KernelSpec,
    noise_variance: f64,
    feature_names: Vec<String>,
    train_x: DMatrix<f64>,
    train_rows: Vec<Vec<f64>>,
    y: Vec<f64>,
    y_mean: f64,
    y_centered: Vec<f64>,
    chol: Cholesky<f64, Dyn>,
    alpha: DVector<f64>,
    jitter: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub mean: Vec<f64>,
    /// Latent-function variance, clamped at zero.
    pub variance: Vec<f64>,
    /// Number of variances that came out negative and were clamped.
    pub clamped: usize,
}

impl GpModel {
    /// Conditions a GP with fixed hyperparameters on `(x, y)`. The target is
    /// centered internally and its mean added back at prediction time.
    pub fn new(
        kernel: KernelSpec,
        noise_variance: f64,
        feature_names: Vec<String>,
        x: DMatrix<f64>,
        y: &[f64],
    ) -> Result<Self> {
        if !(noise_variance.is_finite() && noise_variance >= 0.0) {
            return Err(Error::Validation(format!("invalid noise variance {noise_variance}")));
        }
        if y.len() != x.nrows() {
            return Err(Error::Shape {
                expected: x.nrows(),
                got: y.len(),
            });
        }
        if feature_names.len() != x.ncols() {
            return Err(Error::Shape {
                expected: x.ncols(),
                got: feature_names.len(),
            });
        }
        let k = kernel_matrix(&kernel, &x, noise_variance, 0.0)?;
        let factor = factorize_with_jitter(&k, kernel.signal_variance)?;
        let (chol, jitter) = (factor.chol, factor.jitter);
        let y_mean = y.iter().sum::<f64>() / y.len() as f64;
        let y_centered: Vec<f64> = y.iter().map(|v| v - y_mean).collect();
        let alpha = chol.solve(&DVector::from_column_slice(&y_centered));
        Ok(Self {
            train_rows: rows_of(&x),
            kernel,
            noise_variance,
            feature_names,
            train_x: x,
            y: y.to_vec(),
            y_mean,
            y_centered,
            chol,
            alpha,
            jitter,
        })
    }

    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }

    pub fn noise_variance(&self) -> f64 {
        self.noise_variance
    }

    pub fn hyperparameters(&self) -> Hyperparameters {
        Hyperparameters {
            kernel: self.kernel.clone(),
            noise_variance: self.noise_variance,
        }
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn train_x(&self) -> &DMatrix<f64> {
        &self.train_x
    }

    pub fn n_train(&self) -> usize {
        self.train_rows.len()
    }

    pub fn dim(&self) -> usize {
        self.train_x.ncols()
    }

    pub fn y_mean(&self) -> f64 {
        self.y_mean
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    /// Training targets in their original (uncentered) units.
    pub fn train_y(&self) -> Vec<f64> {
        self.y.clone()
    }

    pub fn log_marginal_likelihood(&self) -> Result<f64> {
        Ok(log_marginal_likelihood(&self.hyperparameters(), &self.train_x, &self.y_centered)?.value)
    }

    /// Predictive mean `k*(K+σ_n²I)⁻¹y` and variance `k** − k*(K+σ_n²I)⁻¹k*ᵀ`.
    pub fn predict(&self, queries: &[Vec<f64>]) -> Result<Prediction> {
        let d = self.dim();
        if let Some(q) = queries.iter().find(|q| q.len() != d) {
            return Err(Error::Shape {
                expected: d,
                got: q.len(),
            });
        }
        if queries.is_empty() {
            return Ok(Prediction {
                mean: vec![],
                variance: vec![],
                clamped: 0,
            });
        }
        let ks = cross_covariance(&self.kernel, queries, &self.train_rows);
        let mean_c = &ks * &self.alpha;
        let v = self
            .chol
            .l_dirty()
            .solve_lower_triangular(&ks.transpose())
            .ok_or(Error::Conditioning { jitter: self.jitter })?;
        let mut clamped = 0;
        let variance = (0..queries.len())
            .map(|i| {
                let kss = self.kernel.signal_variance;
                let var = kss - v.column(i).norm_squared();
                if var < 0.0 {
                    clamped += 1;
                    0.0
                } else {
                    var
                }
            })
            .collect();
        if clamped > 0 {
            tracing::debug!(clamped, "clamped negative predictive variances");
        }
        Ok(Prediction {
            mean: mean_c.iter().map(|m| m + self.y_mean).collect(),
            variance,
            clamped,
        })
    }

    pub fn predict_design(&self, x: &DMatrix<f64>) -> Result<Prediction> {
        self.predict(&rows_of(x))
    }

    /// Relevance scores `1/l_i` and ratios against the noise baseline column.
    pub fn relevance(&self) -> Result<RelevanceReport> {
        let d = self.dim();
        let ls = &self.kernel.length_scales;
        let scales: Vec<f64> = if ls.len() == d { ls.clone() } else { vec![ls[0]; d] };
        let noise_idx = self
            .feature_names
            .iter()
            .position(|n| n == NOISE_COLUMN)
            .ok_or_else(|| Error::RatioUnavailable(NOISE_COLUMN.into()))?;
        let noise_score = 1.0 / scales[noise_idx];
        let mut entries: Vec<RelevanceEntry> = self
            .feature_names
            .iter()
            .zip(&scales)
            .enumerate()
            .map(|(i, (name, &l))| {
                let score = 1.0 / l;
                let ratio = score / noise_score;
                RelevanceEntry {
                    name: name.clone(),
                    length_scale: l,
                    score,
                    ratio,
                    salient: i != noise_idx && ratio >= SALIENCE_RATIO,
                    is_noise: i == noise_idx,
                }
            })
            .collect();
        entries.sort_by(|a, b| b.ratio.total_cmp(&a.ratio).then(a.is_noise.cmp(&b.is_noise)));
        Ok(RelevanceReport { entries, noise_score })
    }

    pub fn snapshot(&self, standardizer: Option<Standardizer>) -> ModelSnapshot {
        ModelSnapshot {
            format_version: ModelSnapshot::FORMAT_VERSION,
            kernel: self.kernel.clone(),
            noise_variance: self.noise_variance,
            feature_names: self.feature_names.clone(),
            train_x: self.train_rows.clone(),
            train_y: self.train_y(),
            standardizer,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelevanceEntry {
    pub name: String,
    pub length_scale: f64,
    pub score: f64,
    pub ratio: f64,
    pub salient: bool,
    pub is_noise: bool,
}

/// Features sorted by descending relevance ratio; the noise baseline sorts
/// after any feature with an equal ratio.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelevanceReport {
    pub entries: Vec<RelevanceEntry>,
    pub noise_score: f64,
}

impl RelevanceReport {
    pub fn get(&self, name: &str) -> Option<&RelevanceEntry> {
        self.entries.iter().find(|e| e.name == name)
    }

    pub fn salient_names(&self) -> Vec<String> {
        self.entries
            .iter()
            .filter(|e| e.salient)
            .map(|e| e.name.clone())
            .collect()
    }
}

/// Versioned JSON model file: hyperparameters plus training data. The
/// factorization is rebuilt on load.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSnapshot {
    pub format_version: u32,
    pub kernel: KernelSpec,
    pub noise_variance: f64,
    pub feature_names: Vec<String>,
    /// Training inputs, one row per observation, in model (standardized) units.
    pub train_x: Vec<Vec<f64>>,
    pub train_y: Vec<f64>,
    /// Transform from raw feature units to model units, if one was applied.
    pub standardizer: Option<Standardizer>,
}

impl ModelSnapshot {
    pub const FORMAT_VERSION: u32 = 1;

    pub fn into_model(self) -> Result<(GpModel, Option<Standardizer>)> {
        if self.format_version != Self::FORMAT_VERSION {
            return Err(Error::Validation(format!(
                "unsupported model format version {}",
                self.format_version
            )));
        }
        let d = self.feature_names.len();
        let n = self.train_x.len();
        if self.train_x.iter().any(|r| r.len() != d) {
            return Err(Error::Validation("ragged training rows in model file".into()));
        }
        let x = DMatrix::from_fn(n, d, |i, j| self.train_x[i][j]);
        let model = GpModel::new(self.kernel, self.noise_variance, self.feature_names, x, &self.train_y)?;
        Ok((model, self.standardizer))
    }
}
