//! Log marginal likelihood and its gradient in log-hyperparameter space.
//!
//! Parameter layout: `[ln σ_f², ln σ_n², ln l_1, …, ln l_m, (ln α)]`, with
//! `ln α` present only for the rational quadratic family.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{factorize_with_jitter, Distance, KernelSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperparameters {
    pub kernel: KernelSpec,
    pub noise_variance: f64,
}

impl Hyperparameters {
    pub fn n_params(&self) -> usize {
        2 + self.kernel.length_scales.len() + usize::from(self.kernel.family.has_shape())
    }

    pub fn to_log(&self) -> Vec<f64> {
        let mut v = vec![self.kernel.signal_variance.ln(), self.noise_variance.ln()];
        v.extend(self.kernel.length_scales.iter().map(|l| l.ln()));
        if self.kernel.family.has_shape() {
            v.push(self.kernel.alpha.ln());
        }
        v
    }

    /// Rebuilds hyperparameters from a log vector laid out like `self`.
    pub fn from_log(&self, theta: &[f64]) -> Hyperparameters {
        let m = self.kernel.length_scales.len();
        let mut kernel = self.kernel.clone();
        kernel.signal_variance = theta[0].exp();
        kernel.length_scales = theta[2..2 + m].iter().map(|v| v.exp()).collect();
        if kernel.family.has_shape() {
            kernel.alpha = theta[2 + m].exp();
        }
        Hyperparameters {
            kernel,
            noise_variance: theta[1].exp(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct LmlValue {
    pub value: f64,
    /// Gradient with respect to the log parameters (see module docs).
    pub gradient: Vec<f64>,
    pub jitter: f64,
}

/// −½ yᵀα − ½ log det(K + σ_n²I) − (n/2) log 2π and its exact gradient.
///
/// `x` is n × d; `y` must already be centered if a zero-mean prior is intended.
pub fn log_marginal_likelihood(hp: &Hyperparameters, x: &DMatrix<f64>, y: &[f64]) -> Result<LmlValue> {
    let spec = &hp.kernel;
    spec.validate()?;
    spec.check_dim(x.ncols())?;
    let n = x.nrows();
    let d = x.ncols();
    if y.len() != n {
        return Err(Error::Shape {
            expected: n,
            got: y.len(),
        });
    }
    if n == 0 {
        return Err(Error::InsufficientData("no training rows".into()));
    }
    let m = spec.length_scales.len();
    let inv_l: Vec<f64> = (0..d)
        .map(|i| 1.0 / spec.length_scales[if m == 1 { 0 } else { i }])
        .collect();
    let sf2 = spec.signal_variance;
    let family = spec.family;
    let alpha_shape = spec.alpha;

    // Row-major copy for cache-friendly pair loops.
    let xs: Vec<f64> = (0..n).flat_map(|i| (0..d).map(move |j| x[(i, j)])).collect();
    let row = |i: usize| &xs[i * d..(i + 1) * d];

    let mut k = DMatrix::<f64>::zeros(n, n);
    let mut dist = vec![0.0; n * n];
    for i in 0..n {
        k[(i, i)] = sf2 + hp.noise_variance;
        let xi = row(i);
        for j in 0..i {
            let xj = row(j);
            let r = match spec.distance {
                Distance::Manhattan => xi
                    .iter()
                    .zip(xj)
                    .zip(&inv_l)
                    .map(|((a, b), il)| (a - b).abs() * il)
                    .sum::<f64>(),
                Distance::Euclidean => xi
                    .iter()
                    .zip(xj)
                    .zip(&inv_l)
                    .map(|((a, b), il)| ((a - b) * il).powi(2))
                    .sum::<f64>()
                    .sqrt(),
            };
            dist[i * n + j] = r;
            let v = sf2 * family.correlation(r, alpha_shape);
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }

    let factor = factorize_with_jitter(&k, sf2)?;
    let (chol, jitter) = (&factor.chol, factor.jitter);
    let yv = DVector::from_column_slice(y);
    let alpha = chol.solve(&yv);
    let l = chol.l_dirty();
    let log_det: f64 = 2.0 * (0..n).map(|i| l[(i, i)].ln()).sum::<f64>();
    let value = -0.5 * yv.dot(&alpha) - 0.5 * log_det - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln();

    let kinv = factor.inverse();
    let np = hp.n_params();
    let mut grad = vec![0.0; np];
    // W = ααᵀ − K⁻¹; ∂LML/∂θ = ½ Σ_ab W_ab ∂K_ab/∂θ.
    let mut trace_w = 0.0;
    for i in 0..n {
        trace_w += alpha[i] * alpha[i] - kinv[(i, i)];
    }
    grad[0] += 0.5 * trace_w * sf2;
    grad[1] = 0.5 * trace_w * hp.noise_variance;

    let mut dr = vec![0.0; d];
    for i in 0..n {
        let xi = row(i);
        for j in 0..i {
            // (j, i) rather than (i, j): contiguous in column-major storage
            let w = alpha[i] * alpha[j] - kinv[(j, i)];
            let r = dist[i * n + j];
            // factor 2: the (i,j) and (j,i) entries contribute equally
            let kf = k[(j, i)];
            grad[0] += w * kf;
            let dk_dr = sf2 * family.correlation_dr(r, alpha_shape);
            let xj = row(j);
            match spec.distance {
                Distance::Manhattan => {
                    for t in 0..d {
                        dr[t] = -(xi[t] - xj[t]).abs() * inv_l[t];
                    }
                }
                Distance::Euclidean => {
                    for t in 0..d {
                        dr[t] = if r > 0.0 {
                            -((xi[t] - xj[t]) * inv_l[t]).powi(2) / r
                        } else {
                            0.0
                        };
                    }
                }
            }
            if m == 1 {
                grad[2] += w * dk_dr * dr.iter().sum::<f64>();
            } else {
                for t in 0..d {
                    grad[2 + t] += w * dk_dr * dr[t];
                }
            }
            if family.has_shape() {
                grad[2 + m] += w * sf2 * family.correlation_dlog_alpha(r, alpha_shape);
            }
        }
    }
    Ok(LmlValue {
        value,
        gradient: grad,
        jitter,
    })
}
