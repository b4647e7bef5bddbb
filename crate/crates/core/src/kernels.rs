//! Stationary covariance functions with isotropic or per-dimension (ARD)
//! length scales.
//!
//! Every family is a function of one scaled distance `r`. By default `r` is
//! the Euclidean form `sqrt(Σ_i ((x_i − x'_i) / l_i)²)`. The Manhattan form
//! `Σ_i |x_i − x'_i| / l_i` is available through [`Distance`], but only
//! Matern12 stays positive definite under it once inputs have more than one
//! dimension; the other families can yield indefinite kernel matrices.

use std::fmt;
use std::str::FromStr;

use nalgebra::{Cholesky, DMatrix, Dyn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const SQRT3: f64 = 1.732_050_807_568_877_2;
const SQRT5: f64 = 2.236_067_977_499_79;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum KernelFamily {
    #[serde(rename = "se")]
    SquaredExponential,
    #[serde(rename = "rq")]
    RationalQuadratic,
    #[serde(rename = "matern12")]
    Matern12,
    #[serde(rename = "matern32")]
    Matern32,
    #[serde(rename = "matern52")]
    Matern52,
}

impl KernelFamily {
    pub const ALL: [KernelFamily; 5] = [
        KernelFamily::SquaredExponential,
        KernelFamily::RationalQuadratic,
        KernelFamily::Matern12,
        KernelFamily::Matern32,
        KernelFamily::Matern52,
    ];

    pub fn name(self) -> &'static str {
        match self {
            KernelFamily::SquaredExponential => "se",
            KernelFamily::RationalQuadratic => "rq",
            KernelFamily::Matern12 => "matern12",
            KernelFamily::Matern32 => "matern32",
            KernelFamily::Matern52 => "matern52",
        }
    }

    /// Unit-variance correlation at scaled distance `r`.
    pub fn correlation(self, r: f64, alpha: f64) -> f64 {
        match self {
            KernelFamily::SquaredExponential => (-0.5 * r * r).exp(),
            KernelFamily::RationalQuadratic => (1.0 + r * r / (2.0 * alpha)).powf(-alpha),
            KernelFamily::Matern12 => (-r).exp(),
            KernelFamily::Matern32 => (1.0 + SQRT3 * r) * (-SQRT3 * r).exp(),
            KernelFamily::Matern52 => (1.0 + SQRT5 * r + 5.0 / 3.0 * r * r) * (-SQRT5 * r).exp(),
        }
    }

    /// d(correlation)/dr.
    pub fn correlation_dr(self, r: f64, alpha: f64) -> f64 {
        match self {
            KernelFamily::SquaredExponential => -r * (-0.5 * r * r).exp(),
            KernelFamily::RationalQuadratic => -r * (1.0 + r * r / (2.0 * alpha)).powf(-alpha - 1.0),
            KernelFamily::Matern12 => -(-r).exp(),
            KernelFamily::Matern32 => -3.0 * r * (-SQRT3 * r).exp(),
            KernelFamily::Matern52 => -5.0 / 3.0 * r * (1.0 + SQRT5 * r) * (-SQRT5 * r).exp(),
        }
    }

    /// d(correlation)/d(ln α) for the rational quadratic; zero otherwise.
    pub fn correlation_dlog_alpha(self, r: f64, alpha: f64) -> f64 {
        if self != KernelFamily::RationalQuadratic {
            return 0.0;
        }
        let z = r * r / (2.0 * alpha);
        let c = (1.0 + z).powf(-alpha);
        alpha * c * (z / (1.0 + z) - (1.0 + z).ln())
    }

    pub fn has_shape(self) -> bool {
        self == KernelFamily::RationalQuadratic
    }
}

impl fmt::Display for KernelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for KernelFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        KernelFamily::ALL.into_iter().find(|k| k.name() == s).ok_or_else(|| {
            Error::Validation(format!(
                "unknown kernel `{s}` (expected se, rq, matern12, matern32 or matern52)"
            ))
        })
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Distance {
    Manhattan,
    #[default]
    Euclidean,
}

impl FromStr for Distance {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "manhattan" => Ok(Distance::Manhattan),
            "euclidean" => Ok(Distance::Euclidean),
            _ => Err(Error::Validation(format!("unknown distance `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub family: KernelFamily,
    pub signal_variance: f64,
    /// One entry for an isotropic kernel, or one per input dimension.
    pub length_scales: Vec<f64>,
    /// Rational-quadratic mixture parameter; ignored by other families.
    pub alpha: f64,
    #[serde(default)]
    pub distance: Distance,
}

impl KernelSpec {
    pub fn isotropic(family: KernelFamily, signal_variance: f64, length_scale: f64) -> Self {
        Self::ard(family, signal_variance, vec![length_scale])
    }

    pub fn ard(family: KernelFamily, signal_variance: f64, length_scales: Vec<f64>) -> Self {
        Self {
            family,
            signal_variance,
            length_scales,
            alpha: 1.0,
            distance: Distance::Euclidean,
        }
    }

    pub fn with_distance(mut self, distance: Distance) -> Self {
        self.distance = distance;
        self
    }

    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.alpha = alpha;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let pos = |v: f64| v.is_finite() && v > 0.0;
        if !pos(self.signal_variance) || !pos(self.alpha) {
            return Err(Error::Validation(
                "kernel variance and shape must be finite and > 0".into(),
            ));
        }
        if self.length_scales.is_empty() || !self.length_scales.iter().all(|&l| pos(l)) {
            return Err(Error::Validation(
                "length scales must be non-empty, finite and > 0".into(),
            ));
        }
        Ok(())
    }

    /// Checks this kernel against input dimension `d`.
    pub fn check_dim(&self, d: usize) -> Result<()> {
        let m = self.length_scales.len();
        if m != 1 && m != d {
            return Err(Error::Shape { expected: d, got: m });
        }
        Ok(())
    }

    #[inline]
    fn scale(&self, i: usize) -> f64 {
        if self.length_scales.len() == 1 {
            self.length_scales[0]
        } else {
            self.length_scales[i]
        }
    }

    /// Scaled distance between two points of equal dimension.
    pub fn scaled_distance(&self, x: &[f64], y: &[f64]) -> f64 {
        match self.distance {
            Distance::Manhattan => x
                .iter()
                .zip(y)
                .enumerate()
                .map(|(i, (a, b))| (a - b).abs() / self.scale(i))
                .sum(),
            Distance::Euclidean => x
                .iter()
                .zip(y)
                .enumerate()
                .map(|(i, (a, b))| ((a - b) / self.scale(i)).powi(2))
                .sum::<f64>()
                .sqrt(),
        }
    }

    pub fn eval(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        if x.len() != y.len() {
            return Err(Error::Shape {
                expected: x.len(),
                got: y.len(),
            });
        }
        self.check_dim(x.len())?;
        Ok(self.eval_unchecked(x, y))
    }

    #[inline]
    pub fn eval_unchecked(&self, x: &[f64], y: &[f64]) -> f64 {
        self.signal_variance * self.family.correlation(self.scaled_distance(x, y), self.alpha)
    }
}

pub(crate) fn rows_of(x: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..x.nrows()).map(|i| x.row(i).iter().copied().collect()).collect()
}

/// K + (σ_n² + ε)·I for the rows of `x`.
pub fn kernel_matrix(spec: &KernelSpec, x: &DMatrix<f64>, noise_variance: f64, jitter: f64) -> Result<DMatrix<f64>> {
    spec.validate()?;
    spec.check_dim(x.ncols())?;
    if x.nrows() == 0 {
        return Err(Error::InsufficientData("kernel matrix of zero rows".into()));
    }
    let rows = rows_of(x);
    let n = rows.len();
    let mut k = DMatrix::zeros(n, n);
    for i in 0..n {
        k[(i, i)] = spec.signal_variance + noise_variance + jitter;
        for j in 0..i {
            let v = spec.eval_unchecked(&rows[i], &rows[j]);
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    Ok(k)
}

/// Cross-covariance between query rows and training rows (queries × train).
pub fn cross_covariance(spec: &KernelSpec, queries: &[Vec<f64>], train: &[Vec<f64>]) -> DMatrix<f64> {
    DMatrix::from_fn(queries.len(), train.len(), |i, j| {
        spec.eval_unchecked(&queries[i], &train[j])
    })
}

/// Jitter escalation: start at 1e-10·σ_f², multiply by 10 up to 1e-4·σ_f².
pub fn jitter_ladder(signal_variance: f64) -> impl Iterator<Item = f64> {
    (0..=6).map(move |k| signal_variance * 1e-10 * 10f64.powi(k))
}

/// A Cholesky factor together with the inverse of its lower triangle.
#[derive(Debug, Clone)]
pub struct Factor {
    pub chol: Cholesky<f64, Dyn>,
    pub l_inv: DMatrix<f64>,
    pub jitter: f64,
}

impl Factor {
    /// `(LLᵀ)⁻¹`.
    pub fn inverse(&self) -> DMatrix<f64> {
        // owned transpose keeps nalgebra on its blocked gemm path
        self.l_inv.transpose() * &self.l_inv
    }
}

/// Cholesky factorization of `matrix + ε·I`, escalating ε along
/// [`jitter_ladder`].
pub fn factorize_with_jitter(matrix: &DMatrix<f64>, signal_variance: f64) -> Result<Factor> {
    let mut last = 0.0;
    for eps in jitter_ladder(signal_variance) {
        let mut m = matrix.clone();
        for i in 0..m.nrows() {
            m[(i, i)] += eps;
        }
        if let Some((l, l_inv)) = blocked_cholesky(&m) {
            return Ok(Factor {
                chol: Cholesky::pack_dirty(l),
                l_inv,
                jitter: eps,
            });
        }
        last = eps;
    }
    Err(Error::Conditioning { jitter: last })
}

/// Recursive 2×2 block Cholesky returning `(L, L⁻¹)`. Most of the work
/// lands in dense products, which is far faster than the scalar
/// column sweep for the matrix sizes seen in training.
fn blocked_cholesky(a: &DMatrix<f64>) -> Option<(DMatrix<f64>, DMatrix<f64>)> {
    let n = a.nrows();
    if n <= 64 {
        let l = Cholesky::new(a.clone())?.unpack();
        let l_inv = l.solve_lower_triangular(&DMatrix::identity(n, n))?;
        return Some((l, l_inv));
    }
    let h = n / 2;
    let (l11, l11_inv) = blocked_cholesky(&a.view((0, 0), (h, h)).into_owned())?;
    let a21 = a.view((h, 0), (n - h, h)).into_owned();
    let l21 = &a21 * l11_inv.transpose();
    let schur = a.view((h, h), (n - h, n - h)).into_owned() - &l21 * l21.transpose();
    let (l22, l22_inv) = blocked_cholesky(&schur)?;
    let inv21 = -(&l22_inv * (&l21 * &l11_inv));
    let mut l = DMatrix::zeros(n, n);
    l.view_mut((0, 0), (h, h)).copy_from(&l11);
    l.view_mut((h, 0), (n - h, h)).copy_from(&l21);
    l.view_mut((h, h), (n - h, n - h)).copy_from(&l22);
    let mut l_inv = DMatrix::zeros(n, n);
    l_inv.view_mut((0, 0), (h, h)).copy_from(&l11_inv);
    l_inv.view_mut((h, 0), (n - h, h)).copy_from(&inv21);
    l_inv.view_mut((h, h), (n - h, n - h)).copy_from(&l22_inv);
    Some((l, l_inv))
}
