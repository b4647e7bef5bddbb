//! Correlation analysis with significance tests, and forecast metrics.
//!
//! Standard deviations use the population convention (divide by n).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{mean_sd, FeatureMatrix};

fn check_pair(x: &[f64], y: &[f64], min: usize) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::Shape {
            expected: x.len(),
            got: y.len(),
        });
    }
    if x.len() < min {
        return Err(Error::InsufficientData(format!(
            "need at least {min} paired samples, got {}",
            x.len()
        )));
    }
    Ok(())
}

/// Product-moment correlation.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    check_pair(x, y, 3)?;
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return Err(Error::UndefinedCorrelation("constant input".into()));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// 1-based ranks with ties sharing their average rank.
pub fn average_ranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && x[idx[j + 1]] == x[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Rank correlation (Pearson on average ranks).
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    check_pair(x, y, 3)?;
    pearson(&average_ranks(x), &average_ranks(y))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TTest {
    pub t: f64,
    /// Two-sided p-value.
    pub p: f64,
    /// Set when |r| = 1 and the statistic is infinite.
    pub perfect: bool,
}

/// Significance of a sample correlation: t = r√(n−2)/√(1−r²) against a
/// Student t with n−2 degrees of freedom, two-sided.
pub fn t_test_corr(r: f64, n: usize) -> Result<TTest> {
    if n < 3 {
        return Err(Error::InsufficientData(format!("t-test needs n >= 3, got {n}")));
    }
    if !(-1.0..=1.0).contains(&r) {
        return Err(Error::Domain(format!("correlation {r} outside [-1, 1]")));
    }
    if r.abs() == 1.0 {
        return Ok(TTest {
            t: r * f64::INFINITY,
            p: 0.0,
            perfect: true,
        });
    }
    let df = (n - 2) as f64;
    let t = r * df.sqrt() / (1.0 - r * r).sqrt();
    Ok(TTest {
        t,
        p: student_t_two_sided(t, df),
        perfect: false,
    })
}

/// P(|T| ≥ |t|) for T ~ Student t with `df` degrees of freedom.
pub fn student_t_two_sided(t: f64, df: f64) -> f64 {
    if t == 0.0 {
        return 1.0;
    }
    reg_inc_beta(df / 2.0, 0.5, df / (df + t * t)).clamp(0.0, 1.0)
}

/// ln Γ(x) for x > 0 (Lanczos, g = 7).
pub fn ln_gamma(x: f64) -> f64 {
    const G: f64 = 7.0;
    const C: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = C[0];
    let t = x + G + 0.5;
    for (i, c) in C.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

/// Regularized incomplete beta I_x(a, b).
pub fn reg_inc_beta(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    // The continued fraction converges fastest for x < (a+1)/(a+b+2).
    if x < (a + 1.0) / (a + b + 2.0) {
        ln_front.exp() * beta_cf(a, b, x) / a
    } else {
        1.0 - ln_front.exp() * beta_cf(b, a, 1.0 - x) / b
    }
}

fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    const EPS: f64 = 1e-16;
    let (qab, qap, qam) = (a + b, a + 1.0, a - 1.0);
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=10_000 {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// Pearson and Spearman correlation with their two-sided p-values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationResult {
    pub pearson: f64,
    pub spearman: f64,
    pub n: usize,
    pub t_stat: f64,
    pub p_value: f64,
    pub spearman_p_value: f64,
}

pub fn correlate(x: &[f64], y: &[f64]) -> Result<CorrelationResult> {
    let r = pearson(x, y)?;
    let rho = spearman(x, y)?;
    let tt = t_test_corr(r, x.len())?;
    let ts = t_test_corr(rho, x.len())?;
    Ok(CorrelationResult {
        pearson: r,
        spearman: rho,
        n: x.len(),
        t_stat: tt.t,
        p_value: tt.p,
        spearman_p_value: ts.p,
    })
}

/// Pairwise Pearson correlations between feature columns. Entries involving a
/// constant column are `None`; the diagonal of a non-constant column is 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationMatrix {
    pub names: Vec<String>,
    pub values: Vec<Vec<Option<f64>>>,
}

pub fn correlation_matrix(matrix: &FeatureMatrix) -> Result<CorrelationMatrix> {
    if matrix.n_rows() < 3 {
        return Err(Error::InsufficientData(
            "correlation matrix needs at least 3 rows".into(),
        ));
    }
    let cols = matrix.columns();
    let d = cols.len();
    let mut values = vec![vec![None; d]; d];
    for i in 0..d {
        for j in i..d {
            let v = if i == j {
                pearson(&cols[i].values, &cols[i].values).ok().map(|_| 1.0)
            } else {
                pearson(&cols[i].values, &cols[j].values).ok()
            };
            values[i][j] = v;
            values[j][i] = v;
        }
    }
    Ok(CorrelationMatrix {
        names: matrix.names().into_iter().map(String::from).collect(),
        values,
    })
}

/// RMSE divided by the population standard deviation of the observations.
pub fn nrmse(forecast: &[f64], observed: &[f64]) -> Result<f64> {
    check_pair(forecast, observed, 2)?;
    let (_, sd) = mean_sd(observed);
    if !(sd > 0.0) {
        return Err(Error::UndefinedCorrelation(
            "nrmse undefined for constant observations".into(),
        ));
    }
    Ok(rmse(forecast, observed) / sd)
}

pub fn rmse(forecast: &[f64], observed: &[f64]) -> f64 {
    let n = forecast.len() as f64;
    (forecast.iter().zip(observed).map(|(f, o)| (f - o).powi(2)).sum::<f64>() / n).sqrt()
}

pub fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Median absolute forecast error in basis points (1 bp = 1e-4 of log-return).
pub fn mad_bp(forecast: &[f64], observed: &[f64]) -> Result<f64> {
    check_pair(forecast, observed, 1)?;
    let mut err: Vec<f64> = forecast.iter().zip(observed).map(|(f, o)| (f - o).abs()).collect();
    Ok(median(&mut err) * 1e4)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub n: usize,
    pub pearson_corr: f64,
    pub p_value: f64,
    pub mad_bp: f64,
    pub nrmse: f64,
}

pub fn metrics(forecast: &[f64], observed: &[f64]) -> Result<MetricsReport> {
    let r = pearson(forecast, observed)?;
    Ok(MetricsReport {
        n: forecast.len(),
        pearson_corr: r,
        p_value: t_test_corr(r, forecast.len())?.p,
        mad_bp: mad_bp(forecast, observed)?,
        nrmse: nrmse(forecast, observed)?,
    })
}
