//! Type-II maximum likelihood training with random restarts.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::lml::{log_marginal_likelihood, Hyperparameters};
use super::GpModel;
use crate::error::{Error, Result};
use crate::kernels::{Distance, KernelFamily, KernelSpec};
use crate::matrix::FeatureMatrix;
use crate::optim;

pub const LENGTH_SCALE_BOUNDS: (f64, f64) = (1e-3, 1e6);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub family: KernelFamily,
    pub distance: Distance,
    /// One length scale per input when set, a single shared one otherwise.
    pub ard: bool,
    pub restarts: usize,
    pub seed: u64,
    pub max_iter: usize,
    /// Lower bound on σ_n² as a fraction of the target variance.
    pub noise_floor: f64,
    /// Used as the first restart's starting point when present.
    pub warm_start: Option<Hyperparameters>,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            family: KernelFamily::Matern32,
            distance: Distance::Euclidean,
            ard: true,
            restarts: 5,
            seed: 0,
            max_iter: 200,
            noise_floor: 1e-6,
            warm_start: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RestartOutcome {
    pub lml: Option<f64>,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
    pub warm: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub restarts: Vec<RestartOutcome>,
    pub best: usize,
    pub lml: f64,
}

/// Fits on every feature column of `matrix` against its target.
pub fn fit(matrix: &FeatureMatrix, opts: &FitOptions) -> Result<GpModel> {
    let names = matrix.names().into_iter().map(String::from).collect();
    fit_design(matrix.design(), matrix.target(), names, opts).map(|(m, _)| m)
}

/// Maximizes the log marginal likelihood over log σ_f², log σ_n², log l_i
/// (and log α for the rational quadratic) from `opts.restarts` starting
/// points; the best optimum wins, ties going to the earliest restart.
pub fn fit_design(
    x: DMatrix<f64>,
    y: &[f64],
    names: Vec<String>,
    opts: &FitOptions,
) -> Result<(GpModel, FitDiagnostics)> {
    let n = x.nrows();
    let d = x.ncols();
    if n < 2 {
        return Err(Error::InsufficientData(format!("fit needs >= 2 rows, got {n}")));
    }
    if y.len() != n {
        return Err(Error::Shape {
            expected: n,
            got: y.len(),
        });
    }
    if opts.restarts == 0 {
        return Err(Error::Validation("restarts must be >= 1".into()));
    }
    let y_mean = y.iter().sum::<f64>() / n as f64;
    let yc: Vec<f64> = y.iter().map(|v| v - y_mean).collect();
    let var = yc.iter().map(|v| v * v).sum::<f64>() / n as f64;
    if !(var > 0.0) {
        return Err(Error::Training("target has zero variance".into()));
    }

    let m = if opts.ard { d.max(1) } else { 1 };
    let template = Hyperparameters {
        kernel: KernelSpec {
            family: opts.family,
            signal_variance: var,
            length_scales: vec![1.0; m],
            alpha: 1.0,
            distance: opts.distance,
        },
        noise_variance: var / 2.0,
    };
    let np = template.n_params();
    let mut lo = vec![(var * 1e-6).ln(), (var * opts.noise_floor).ln()];
    let mut hi = vec![(var * 1e3).ln(), (var * 1e3).ln()];
    lo.extend(std::iter::repeat_n(LENGTH_SCALE_BOUNDS.0.ln(), m));
    hi.extend(std::iter::repeat_n(LENGTH_SCALE_BOUNDS.1.ln(), m));
    if opts.family.has_shape() {
        lo.push(1e-3f64.ln());
        hi.push(1e3f64.ln());
    }

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut starts: Vec<(Vec<f64>, bool)> = Vec::with_capacity(opts.restarts);
    let warm = opts
        .warm_start
        .as_ref()
        .filter(|w| w.kernel.family == opts.family && w.n_params() == np)
        .map(|w| w.to_log());
    for k in 0..opts.restarts {
        // Draw for every restart so the random starts do not depend on warm-starting.
        let mut theta = template.to_log();
        for t in 0..m {
            theta[2 + t] = rng.random_range(0.5f64..2.0).ln();
        }
        match (&warm, k) {
            (Some(w), 0) => starts.push((w.clone(), true)),
            _ => starts.push((theta, false)),
        }
    }

    let optim_opts = optim::Options {
        max_iter: opts.max_iter,
        ..Default::default()
    };
    let run = |(start, warm): (Vec<f64>, bool)| {
        let objective = |theta: &[f64]| {
            let hp = template.from_log(theta);
            log_marginal_likelihood(&hp, &x, &yc)
                .ok()
                .map(|v| (-v.value, v.gradient.iter().map(|g| -g).collect()))
        };
        match optim::minimize_box(objective, &start, &lo, &hi, &optim_opts) {
            Some(o) => (
                Some(o.x.clone()),
                RestartOutcome {
                    lml: Some(-o.f),
                    iterations: o.iterations,
                    evaluations: o.evaluations,
                    converged: o.converged,
                    warm,
                },
            ),
            None => (
                None,
                RestartOutcome {
                    lml: None,
                    iterations: 0,
                    evaluations: 1,
                    converged: false,
                    warm,
                },
            ),
        }
    };
    let results = crate::par_map(starts, run);

    let mut best: Option<(usize, f64)> = None;
    for (i, (_, o)) in results.iter().enumerate() {
        if let Some(l) = o.lml {
            if best.is_none_or(|(_, b)| l > b) {
                best = Some((i, l));
            }
        }
    }
    let diagnostics_of = |best: usize, lml: f64| FitDiagnostics {
        restarts: results.iter().map(|r| r.1.clone()).collect(),
        best,
        lml,
    };
    let Some((bi, lml)) = best else {
        return Err(Error::Training(format!(
            "all {} restarts failed: {:?}",
            opts.restarts,
            diagnostics_of(0, f64::NAN).restarts
        )));
    };
    let theta = results[bi].0.as_ref().unwrap();
    let hp = template.from_log(theta);
    let model = GpModel::new(hp.kernel, hp.noise_variance, names, x.clone(), y)?;
    Ok((model, diagnostics_of(bi, lml)))
}
