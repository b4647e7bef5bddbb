//! Baseline forecasters: least-squares AR(p), fitted once or refitted on a
//! trailing window, and a Kalman filter over AR coefficients.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par_map;
use crate::series::DatedSeries;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArModel {
    pub order: usize,
    pub intercept: f64,
    /// φ_1..φ_p, where φ_i multiplies the value i steps back.
    pub coefficients: Vec<f64>,
}

/// Design `[1, x(t−1), …, x(t−p)]` and response `x(t)` for t = p..n.
fn ar_design(x: &[f64], p: usize) -> (DMatrix<f64>, DVector<f64>) {
    let rows = x.len() - p;
    let design = DMatrix::from_fn(rows, p + 1, |i, j| if j == 0 { 1.0 } else { x[p + i - j] });
    let y = DVector::from_iterator(rows, x[p..].iter().copied());
    (design, y)
}

/// Ordinary least squares of `x(t)` on `[1, x(t−1..t−p)]`.
///
/// A rank-deficient design is an error, except for an all-zero series, whose
/// least-squares fit is the zero model.
pub fn ar_fit_values(x: &[f64], p: usize) -> Result<ArModel> {
    if p == 0 {
        return Err(Error::Validation("AR order must be >= 1".into()));
    }
    if x.len() < p + 2 {
        return Err(Error::InsufficientData(format!(
            "AR({p}) needs at least {} points, got {}",
            p + 2,
            x.len()
        )));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Validation("non-finite value in AR input".into()));
    }
    if x.iter().all(|v| *v == 0.0) {
        return Ok(ArModel {
            order: p,
            intercept: 0.0,
            coefficients: vec![0.0; p],
        });
    }
    let (design, y) = ar_design(x, p);
    let dim = design.nrows().max(design.ncols()) as f64;
    let svd = design.svd(true, true);
    let eps = svd.singular_values.max() * f64::EPSILON * dim;
    let rank = svd.rank(eps);
    if rank < p + 1 {
        return Err(Error::Rank { rank, cols: p + 1 });
    }
    let beta = svd
        .solve(&y, eps)
        .map_err(|e| Error::Training(format!("AR least squares: {e}")))?;
    Ok(ArModel {
        order: p,
        intercept: beta[0],
        coefficients: beta.iter().skip(1).copied().collect(),
    })
}

pub fn ar_fit(returns: &DatedSeries, p: usize) -> Result<ArModel> {
    ar_fit_values(returns.values(), p)
}

/// `intercept + Σ φ_i·x(t−i+1)`, where `history` ends at `x(t)`.
pub fn ar_forecast(model: &ArModel, history: &[f64]) -> Result<f64> {
    let p = model.order;
    if history.len() < p {
        return Err(Error::InsufficientData(format!(
            "AR({p}) forecast needs {p} lags, got {}",
            history.len()
        )));
    }
    let n = history.len();
    Ok(model.intercept
        + model
            .coefficients
            .iter()
            .enumerate()
            .map(|(i, phi)| phi * history[n - 1 - i])
            .sum::<f64>())
}

/// Fits once on the first `n_train` values and forecasts every later value
/// from its realized lags. Forecasts are dated at the value they predict.
pub fn lookahead_ar(series: &DatedSeries, p: usize, n_train: usize) -> Result<DatedSeries> {
    let x = series.values();
    if n_train >= x.len() {
        return Err(Error::InsufficientData("look-ahead AR has no test rows".into()));
    }
    let model = ar_fit_values(&x[..n_train], p)?;
    let values = (n_train..x.len())
        .map(|t| ar_forecast(&model, &x[..t]))
        .collect::<Result<Vec<_>>>()?;
    DatedSeries::new(format!("ar{p}_lookahead"), series.dates()[n_train..].to_vec(), values)
}

/// One-step forecasts of `x(t)` for t = w..n, each from an AR(p) fitted on
/// `x(t−w..t)` only. Forecasts are dated at the value they predict.
pub fn adaptive_ar(series: &DatedSeries, p: usize, w: usize) -> Result<DatedSeries> {
    let x = series.values();
    if w < p + 2 {
        return Err(Error::Validation(format!("window {w} must be >= p + 2 = {}", p + 2)));
    }
    if x.len() <= w {
        return Err(Error::InsufficientData(format!(
            "adaptive AR needs more than {w} points, got {}",
            x.len()
        )));
    }
    let values = par_map((w..x.len()).collect(), |t| {
        let window = &x[t - w..t];
        ar_fit_values(window, p).and_then(|m| ar_forecast(&m, window))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    DatedSeries::new(format!("ar{p}_adaptive"), series.dates()[w..].to_vec(), values)
}

/// Kalman filter whose state is the AR coefficient vector, with identity
/// transition, process noise `qI` and observation `x(t) = lagsᵀβ + v`,
/// `v ~ N(0, r)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KalmanArState {
    pub order: usize,
    pub state: Vec<f64>,
    /// Row-major p × p covariance.
    pub covariance: Vec<f64>,
    pub q: f64,
    pub r: f64,
    /// Negative eigenvalues clamped to zero so far.
    pub clamped: usize,
}

impl KalmanArState {
    pub fn new(order: usize, q: f64, r: f64, prior_variance: f64) -> Result<Self> {
        if order == 0 {
            return Err(Error::Validation("Kalman AR order must be >= 1".into()));
        }
        if !(q.is_finite() && q >= 0.0) {
            return Err(Error::Validation(format!("process noise q must be >= 0, got {q}")));
        }
        if !(r.is_finite() && r > 0.0) {
            return Err(Error::Validation(format!("observation noise r must be > 0, got {r}")));
        }
        if !(prior_variance.is_finite() && prior_variance > 0.0) {
            return Err(Error::Validation(format!(
                "prior variance must be > 0, got {prior_variance}"
            )));
        }
        let mut covariance = vec![0.0; order * order];
        for i in 0..order {
            covariance[i * order + i] = prior_variance;
        }
        Ok(Self {
            order,
            state: vec![0.0; order],
            covariance,
            q,
            r,
            clamped: 0,
        })
    }

    fn cov(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.order, self.order, &self.covariance)
    }
}

/// One predict/update cycle. Returns the updated state and the forecast
/// `lagsᵀβ` made before the update. `lags[0]` is the most recent value.
pub fn kalman_ar_step(state: &KalmanArState, lags: &[f64], observed: f64) -> Result<(KalmanArState, f64)> {
    let p = state.order;
    if lags.len() != p {
        return Err(Error::Shape {
            expected: p,
            got: lags.len(),
        });
    }
    let h = DVector::from_column_slice(lags);
    let beta = DVector::from_column_slice(&state.state);
    let forecast = h.dot(&beta);
    let prior = state.cov() + DMatrix::identity(p, p) * state.q;
    let ph = &prior * &h;
    let s = h.dot(&ph) + state.r;
    let gain = ph / s;
    let beta = beta + &gain * (observed - forecast);
    let updated = &prior - &gain * (h.transpose() * &prior);
    let sym = (&updated + updated.transpose()) * 0.5;

    let mut clamped = state.clamped;
    let eig = SymmetricEigen::new(sym.clone());
    let negatives = eig.eigenvalues.iter().filter(|v| **v < 0.0).count();
    let cov = if negatives > 0 {
        clamped += negatives;
        tracing::debug!(negatives, "clamped negative covariance eigenvalues");
        let vals = eig.eigenvalues.map(|v| v.max(0.0));
        &eig.eigenvectors * DMatrix::from_diagonal(&vals) * eig.eigenvectors.transpose()
    } else {
        sym
    };
    if cov.iter().chain(beta.iter()).any(|v| !v.is_finite()) || !forecast.is_finite() {
        return Err(Error::Numerical("Kalman update produced non-finite values".into()));
    }
    let mut covariance = Vec::with_capacity(p * p);
    for i in 0..p {
        for j in 0..p {
            covariance.push(cov[(i, j)]);
        }
    }
    Ok((
        KalmanArState {
            order: p,
            state: beta.iter().copied().collect(),
            covariance,
            q: state.q,
            r: state.r,
            clamped,
        },
        forecast,
    ))
}

/// Runs the filter over `x`, returning the pre-update forecast of every
/// `x(t)`, t ≥ p, and the final state.
pub fn kalman_filter(x: &[f64], initial: &KalmanArState) -> Result<(Vec<f64>, KalmanArState)> {
    let p = initial.order;
    let mut state = initial.clone();
    let mut out = Vec::with_capacity(x.len().saturating_sub(p));
    let mut lags = vec![0.0; p];
    for t in p..x.len() {
        for (i, l) in lags.iter_mut().enumerate() {
            *l = x[t - 1 - i];
        }
        let (next, f) = kalman_ar_step(&state, &lags, x[t])?;
        out.push(f);
        state = next;
    }
    Ok((out, state))
}

/// Kalman AR forecasts of every value from index `start` on. The filter
/// runs from the beginning of the series, so each forecast uses only
/// earlier values.
pub fn kalman_forecasts(series: &DatedSeries, p: usize, q: f64, r: f64, start: usize) -> Result<DatedSeries> {
    let x = series.values();
    if start < p || start >= x.len() {
        return Err(Error::Validation(format!(
            "Kalman forecasts must start in [{p}, {}), got {start}",
            x.len()
        )));
    }
    let init = KalmanArState::new(p, q, r, 1.0)?;
    let (f, _) = kalman_filter(x, &init)?;
    DatedSeries::new(
        format!("kf{p}"),
        series.dates()[start..].to_vec(),
        f[start - p..].to_vec(),
    )
}

/// Default noise settings: q = 1e-6 and r = population variance of `x`.
pub fn kalman_defaults(x: &[f64]) -> (f64, f64) {
    let (_, sd) = crate::matrix::mean_sd(x);
    (1e-6, (sd * sd).max(f64::MIN_POSITIVE))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KalmanTuning {
    pub q: f64,
    pub r: f64,
    pub mse: f64,
}

/// Grid search of (q, r) for one-step MSE on `train`. Ties go to the
/// earliest grid pair.
pub fn tune_kalman(train: &[f64], p: usize, q_grid: &[f64], r_grid: &[f64]) -> Result<KalmanTuning> {
    if train.len() <= p {
        return Err(Error::InsufficientData(format!(
            "Kalman tuning needs more than {p} points"
        )));
    }
    let pairs: Vec<(f64, f64)> = q_grid
        .iter()
        .flat_map(|&q| r_grid.iter().map(move |&r| (q, r)))
        .collect();
    let scores = par_map(pairs.clone(), |(q, r)| {
        let init = KalmanArState::new(p, q, r, 1.0).ok()?;
        let (f, _) = kalman_filter(train, &init).ok()?;
        let mse = f.iter().zip(&train[p..]).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / f.len() as f64;
        mse.is_finite().then_some(mse)
    });
    let mut best: Option<KalmanTuning> = None;
    for ((q, r), mse) in pairs.into_iter().zip(scores) {
        if let Some(mse) = mse {
            if best.as_ref().is_none_or(|b| mse < b.mse) {
                best = Some(KalmanTuning { q, r, mse });
            }
        }
    }
    best.ok_or_else(|| Error::Calibration("no Kalman grid point produced a finite MSE".into()))
}

/// Grid used by [`tune_kalman`] when none is given: q over decades
/// 1e-8..1e-2 and r at multiples of the sample variance.
pub fn default_kalman_grid(train: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let (_, r0) = kalman_defaults(train);
    let q: Vec<f64> = (0..=6).map(|k| 1e-8 * 10f64.powi(k)).collect();
    let r: Vec<f64> = [0.25, 0.5, 1.0, 2.0, 4.0].iter().map(|m| m * r0).collect();
    (q, r)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn random_walk_model_forecasts_last_value() {
        let m = ArModel {
            order: 1,
            intercept: 0.0,
            coefficients: vec![1.0],
        };
        assert_eq!(ar_forecast(&m, &[0.3, -0.7]).unwrap(), -0.7);
        let z = ArModel {
            order: 2,
            intercept: 0.25,
            coefficients: vec![0.0, 0.0],
        };
        assert_eq!(ar_forecast(&z, &[1.0, 2.0]).unwrap(), 0.25);
        assert!(ar_forecast(&z, &[1.0]).is_err());
    }

    #[test]
    fn zero_series_gives_zero_model() {
        let m = ar_fit_values(&[0.0; 20], 3).unwrap();
        assert_eq!(m.intercept, 0.0);
        assert_eq!(m.coefficients, vec![0.0; 3]);
    }

    #[test]
    fn constant_nonzero_series_is_rank_deficient() {
        assert!(matches!(
            ar_fit_values(&[0.5; 20], 1),
            Err(Error::Rank { rank: 1, cols: 2 })
        ));
    }

    #[test]
    fn too_short_is_rejected() {
        assert!(ar_fit_values(&[1.0, 2.0, 3.0], 2).is_err());
        assert!(ar_fit_values(&[1.0, 2.0, 3.0], 0).is_err());
    }

    #[test]
    fn window_of_all_but_one_gives_single_forecast() {
        let d = crate::synthetic::weekday_calendar(chrono::NaiveDate::from_ymd_opt(2014, 1, 1).unwrap(), 12);
        let v: Vec<f64> = (0..12).map(|i| ((i * 7) % 5) as f64 - 2.0).collect();
        let s = DatedSeries::new("r", d, v).unwrap();
        let f = adaptive_ar(&s, 1, 11).unwrap();
        assert_eq!(f.len(), 1);
        assert_eq!(f.dates()[0], s.dates()[11]);
    }

    #[test]
    fn huge_observation_noise_freezes_state() {
        let s = KalmanArState::new(2, 0.0, 1e300, 1.0).unwrap();
        let (next, f) = kalman_ar_step(&s, &[0.5, -0.2], 3.0).unwrap();
        assert_eq!(f, 0.0);
        assert!(next.state.iter().all(|b| b.abs() < 1e-290));
    }

    #[test]
    fn invalid_noise_is_rejected() {
        assert!(KalmanArState::new(1, -1.0, 1.0, 1.0).is_err());
        assert!(KalmanArState::new(1, 0.0, 0.0, 1.0).is_err());
        let s = KalmanArState::new(2, 0.0, 1.0, 1.0).unwrap();
        assert!(matches!(kalman_ar_step(&s, &[1.0], 1.0), Err(Error::Shape { .. })));
    }
}
