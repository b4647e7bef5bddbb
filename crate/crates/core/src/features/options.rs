//! Open-interest features: Directionality and Viscosity, with grid-search
//! calibration of their decay parameters.
//!
//! Time to expiry `τ` is measured in calendar days from the snapshot date.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::OptionsChainSnapshot;
use crate::series::{Date, DatedSeries};
use crate::{par_map, stats};

/// Decay parameters for the two open-interest features.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriceSpaceParams {
    /// Per-day decay of Directionality weights with time to expiry.
    pub gamma_d: f64,
    /// Per-price-unit decay of Viscosity weights with distance from spot.
    pub lambda_v: f64,
    /// Per-day decay of Viscosity weights with time to expiry.
    pub gamma_v: f64,
}

impl PriceSpaceParams {
    pub fn validate(&self) -> Result<()> {
        for (n, v) in [
            ("gamma_d", self.gamma_d),
            ("lambda_v", self.lambda_v),
            ("gamma_v", self.gamma_v),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Validation(format!("{n} must be finite and >= 0, got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceSpaceFeatures {
    pub directionality: DatedSeries,
    pub viscosity: DatedSeries,
}

impl PriceSpaceFeatures {
    /// Both features on the dates where directionality and a spot price exist.
    pub fn compute(snapshots: &[OptionsChainSnapshot], spots: &DatedSeries, params: &PriceSpaceParams) -> Result<Self> {
        params.validate()?;
        let dir = directionality(snapshots, params.gamma_d)?;
        let visc = viscosity_series(snapshots, spots, params.lambda_v, params.gamma_v)?;
        let idx = crate::ingest::align(&[&dir, &visc], &[])?;
        Ok(Self {
            directionality: dir.restrict_to(&idx),
            viscosity: visc.restrict_to(&idx),
        })
    }
}

/// A sorted 1-D search grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid(pub Vec<f64>);

impl Grid {
    /// `n` evenly spaced points over `[lo, hi]` inclusive.
    pub fn linspace(lo: f64, hi: f64, n: usize) -> Self {
        match n {
            0 => Grid(vec![]),
            1 => Grid(vec![lo]),
            _ => Grid((0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()),
        }
    }

    /// γ_D grid: 0 to 0.5 in steps of 0.005.
    pub fn default_gamma_d() -> Self {
        Grid((0..=100).map(|i| i as f64 * 0.005).collect())
    }

    /// λ_V grid: 64 points over [0, 0.2].
    pub fn default_lambda_v() -> Self {
        Self::linspace(0.0, 0.2, 64)
    }

    /// γ_V grid: 64 points over [0, 0.5].
    pub fn default_gamma_v() -> Self {
        Self::linspace(0.0, 0.5, 64)
    }

    fn check(&self, what: &str) -> Result<()> {
        if self.0.is_empty() {
            return Err(Error::Validation(format!("{what} grid is empty")));
        }
        if self.0.iter().any(|v| !(v.is_finite() && *v >= 0.0)) || self.0.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Validation(format!(
                "{what} grid must be strictly increasing, finite and >= 0"
            )));
        }
        Ok(())
    }
}

/// Σ over entries of (call − put)·e^{−γτ} for one snapshot.
pub fn directionality_level(snapshot: &OptionsChainSnapshot, gamma_d: f64) -> f64 {
    snapshot
        .entries
        .iter()
        .map(|e| (e.call_oi - e.put_oi) * (-gamma_d * snapshot.days_to_expiry(e)).exp())
        .sum()
}

fn check_order(snapshots: &[OptionsChainSnapshot]) -> Result<()> {
    if let Some(w) = snapshots.windows(2).find(|w| w[0].date >= w[1].date) {
        return Err(Error::Validation(format!(
            "options snapshots out of order: {} then {}",
            w[0].date, w[1].date
        )));
    }
    Ok(())
}

/// Day-over-day change in expiry-discounted call-minus-put open interest,
/// dated from the second snapshot onward.
pub fn directionality(snapshots: &[OptionsChainSnapshot], gamma_d: f64) -> Result<DatedSeries> {
    if snapshots.len() < 2 {
        return Err(Error::InsufficientData(
            "directionality needs at least 2 snapshots".into(),
        ));
    }
    check_order(snapshots)?;
    let levels: Vec<f64> = snapshots.iter().map(|s| directionality_level(s, gamma_d)).collect();
    DatedSeries::new(
        "directionality",
        snapshots[1..].iter().map(|s| s.date).collect(),
        levels.windows(2).map(|w| w[1] - w[0]).collect(),
    )
}

/// Σ over entries of e^{−λ|spot − s|}·e^{−γτ}·ln(min(call, put) + 1).
pub fn viscosity(snapshot: &OptionsChainSnapshot, spot: f64, lambda_v: f64, gamma_v: f64) -> f64 {
    snapshot
        .entries
        .iter()
        .map(|e| {
            (-lambda_v * (spot - e.strike).abs()).exp()
                * (-gamma_v * snapshot.days_to_expiry(e)).exp()
                * (e.call_oi.min(e.put_oi) + 1.0).ln()
        })
        .sum()
}

/// Viscosity on every snapshot date that has a same-day spot price.
pub fn viscosity_series(
    snapshots: &[OptionsChainSnapshot],
    spots: &DatedSeries,
    lambda_v: f64,
    gamma_v: f64,
) -> Result<DatedSeries> {
    check_order(snapshots)?;
    let mut dates = Vec::new();
    let mut values = Vec::new();
    for s in snapshots {
        if let Some(spot) = spots.get(s.date) {
            if spot <= 0.0 {
                return Err(Error::Domain(format!("non-positive spot {spot} on {}", s.date)));
            }
            dates.push(s.date);
            values.push(viscosity(s, spot, lambda_v, gamma_v));
        }
    }
    DatedSeries::new("viscosity", dates, values)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaDFit {
    pub gamma_d: f64,
    /// Training Pearson correlation of Directionality with next-day returns.
    pub correlation: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViscosityFit {
    pub lambda_v: f64,
    pub gamma_v: f64,
    /// Training Pearson correlation of Viscosity with absolute next-day returns.
    pub correlation: f64,
    pub n: usize,
}

/// Grid point maximizing corr(Directionality(γ), next-day return).
///
/// `next_day_returns` is dated at the feature date: its value at `t` is the
/// return realized from `t` to the following row. Ties go to the smallest γ.
pub fn fit_gamma_d(
    snapshots: &[OptionsChainSnapshot],
    next_day_returns: &DatedSeries,
    grid: &Grid,
) -> Result<GammaDFit> {
    grid.check("gamma_d")?;
    check_order(snapshots)?;
    // Level(γ) = Σ_τ netOI(τ)·e^{−γτ}; pre-aggregate net OI by τ per snapshot.
    let mut pairs: Vec<(usize, f64)> = Vec::new();
    for (i, s) in snapshots.iter().enumerate().skip(1) {
        if let Some(r) = next_day_returns.get(s.date) {
            pairs.push((i, r));
        }
    }
    if pairs.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "gamma_d calibration needs >= 3 aligned points, got {}",
            pairs.len()
        )));
    }
    let terms: Vec<Vec<(f64, f64)>> = snapshots
        .iter()
        .map(|s| {
            let mut by_tau: std::collections::BTreeMap<i64, f64> = Default::default();
            for e in &s.entries {
                *by_tau.entry((e.expiry - s.date).num_days()).or_default() += e.call_oi - e.put_oi;
            }
            by_tau.into_iter().map(|(t, v)| (t as f64, v)).collect()
        })
        .collect();
    let level = |i: usize, g: f64| -> f64 { terms[i].iter().map(|(t, v)| v * (-g * t).exp()).sum() };
    let y: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let corrs = par_map(grid.0.clone(), |g| {
        let x: Vec<f64> = pairs.iter().map(|&(i, _)| level(i, g) - level(i - 1, g)).collect();
        stats::pearson(&x, &y).ok()
    });
    let mut best: Option<(usize, f64)> = None;
    for (k, c) in corrs.iter().enumerate() {
        if let Some(c) = *c {
            if best.is_none_or(|(_, b)| c > b) {
                best = Some((k, c));
            }
        }
    }
    let (k, c) =
        best.ok_or_else(|| Error::Calibration("directionality has zero variance at every grid point".into()))?;
    Ok(GammaDFit {
        gamma_d: grid.0[k],
        correlation: c,
        n: pairs.len(),
    })
}

/// Grid pair minimizing corr(Viscosity(λ, γ), |next-day return|).
/// Ties go to the lexicographically smallest (λ, γ).
pub fn fit_viscosity_params(
    snapshots: &[OptionsChainSnapshot],
    spots: &DatedSeries,
    abs_returns: &DatedSeries,
    lambda_grid: &Grid,
    gamma_grid: &Grid,
) -> Result<ViscosityFit> {
    lambda_grid.check("lambda_v")?;
    gamma_grid.check("gamma_v")?;
    check_order(snapshots)?;
    struct Term {
        dist: f64,
        tau: f64,
        log_oi: f64,
    }
    let mut days: Vec<Vec<Term>> = Vec::new();
    let mut y = Vec::new();
    for s in snapshots {
        let (Some(spot), Some(r)) = (spots.get(s.date), abs_returns.get(s.date)) else {
            continue;
        };
        days.push(
            s.entries
                .iter()
                .map(|e| Term {
                    dist: (spot - e.strike).abs(),
                    tau: s.days_to_expiry(e),
                    log_oi: (e.call_oi.min(e.put_oi) + 1.0).ln(),
                })
                .filter(|t| t.log_oi > 0.0)
                .collect(),
        );
        y.push(r);
    }
    if y.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "viscosity calibration needs >= 3 aligned points, got {}",
            y.len()
        )));
    }
    let gammas = &gamma_grid.0;
    let rows = par_map((0..lambda_grid.0.len()).collect(), |i| {
        let lam = lambda_grid.0[i];
        let mut series = vec![vec![0.0; days.len()]; gammas.len()];
        for (t, terms) in days.iter().enumerate() {
            for term in terms {
                let a = (-lam * term.dist).exp() * term.log_oi;
                for (j, g) in gammas.iter().enumerate() {
                    series[j][t] += a * (-g * term.tau).exp();
                }
            }
        }
        series.iter().map(|x| stats::pearson(x, &y).ok()).collect::<Vec<_>>()
    });
    let mut best: Option<(usize, usize, f64)> = None;
    for (i, row) in rows.iter().enumerate() {
        for (j, c) in row.iter().enumerate() {
            if let Some(c) = *c {
                if best.is_none_or(|(_, _, b)| c < b) {
                    best = Some((i, j, c));
                }
            }
        }
    }
    let (i, j, c) = best.ok_or_else(|| Error::Calibration("viscosity has zero variance at every grid point".into()))?;
    Ok(ViscosityFit {
        lambda_v: lambda_grid.0[i],
        gamma_v: gammas[j],
        correlation: c,
        n: y.len(),
    })
}

/// Fits all three parameters on the rows dated `<= train_end`.
///
/// `next_day_returns` is dated at the feature date, as in [`fit_gamma_d`].
pub fn calibrate(
    snapshots: &[OptionsChainSnapshot],
    spots: &DatedSeries,
    next_day_returns: &DatedSeries,
    train_end: Option<Date>,
) -> Result<(PriceSpaceParams, GammaDFit, ViscosityFit)> {
    let cut = |d: Date| train_end.is_none_or(|e| d <= e);
    let snaps: Vec<OptionsChainSnapshot> = snapshots.iter().filter(|s| cut(s.date)).cloned().collect();
    let abs = next_day_returns.map("abs_return", f64::abs)?;
    let gd = fit_gamma_d(&snaps, next_day_returns, &Grid::default_gamma_d())?;
    let vf = fit_viscosity_params(&snaps, spots, &abs, &Grid::default_lambda_v(), &Grid::default_gamma_v())?;
    Ok((
        PriceSpaceParams {
            gamma_d: gd.gamma_d,
            lambda_v: vf.lambda_v,
            gamma_v: vf.gamma_v,
        },
        gd,
        vf,
    ))
}
