//! Browser bindings for three small demos: kernel profiles, a 1-D GP
//! posterior and ARD relevance on a synthetic matrix. Each binding takes
//! plain numbers and returns JSON; the Rust functions underneath are
//! ordinary and tested natively.

use ardfuse::gp::fit_design;
use ardfuse::pipeline::relevance_fit;
use ardfuse::synthetic::{generate_synthetic, SyntheticSpec};
use ardfuse::{Error, FitOptions, GpModel, KernelFamily, KernelSpec, Result};
use nalgebra::DMatrix;
use serde::Serialize;
use wasm_bindgen::prelude::*;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Profile {
    pub family: String,
    pub k: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Profiles {
    pub r: Vec<f64>,
    pub curves: Vec<Profile>,
}

/// k(0, r) for r in [0, max_r] for every family, unit signal variance.
pub fn kernel_profiles(length_scale: f64, alpha: f64, max_r: f64, points: usize) -> Result<Profiles> {
    if points < 2 || !(max_r > 0.0) {
        return Err(Error::Validation("need at least 2 points over a positive range".into()));
    }
    let r: Vec<f64> = (0..points).map(|i| max_r * i as f64 / (points - 1) as f64).collect();
    let curves = KernelFamily::ALL
        .iter()
        .map(|&f| {
            let spec = KernelSpec::isotropic(f, 1.0, length_scale).with_alpha(alpha);
            let k = r.iter().map(|&ri| spec.eval(&[0.0], &[ri])).collect::<Result<_>>()?;
            Ok(Profile {
                family: f.name().to_string(),
                k,
            })
        })
        .collect::<Result<_>>()?;
    Ok(Profiles { r, curves })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Posterior {
    pub x: Vec<f64>,
    pub mean: Vec<f64>,
    /// Predictive sd including observation noise.
    pub sd: Vec<f64>,
    pub signal_variance: f64,
    pub length_scale: f64,
    pub noise_variance: f64,
    pub log_marginal_likelihood: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PosteriorRequest {
    pub family: KernelFamily,
    pub signal_variance: f64,
    pub length_scale: f64,
    pub noise_variance: f64,
    /// Replace the hyperparameters above with maximum-likelihood ones.
    pub fit: bool,
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
}

pub fn posterior(xs: &[f64], ys: &[f64], req: &PosteriorRequest) -> Result<Posterior> {
    if xs.len() != ys.len() {
        return Err(Error::Shape {
            expected: xs.len(),
            got: ys.len(),
        });
    }
    if xs.is_empty() || req.points < 2 || !(req.hi > req.lo) {
        return Err(Error::Validation("need observations and a non-empty grid".into()));
    }
    let x = DMatrix::from_column_slice(xs.len(), 1, xs);
    let names = vec!["x".to_string()];
    let model = if req.fit {
        let opts = FitOptions {
            family: req.family,
            restarts: 3,
            ..FitOptions::default()
        };
        fit_design(x, ys, names, &opts)?.0
    } else {
        let k = KernelSpec::isotropic(req.family, req.signal_variance, req.length_scale);
        GpModel::new(k, req.noise_variance, names, x, ys)?
    };
    let grid: Vec<f64> = (0..req.points)
        .map(|i| req.lo + (req.hi - req.lo) * i as f64 / (req.points - 1) as f64)
        .collect();
    let queries: Vec<Vec<f64>> = grid.iter().map(|&g| vec![g]).collect();
    let p = model.predict(&queries)?;
    let noise = model.noise_variance();
    Ok(Posterior {
        sd: p.variance.iter().map(|v| (v + noise).sqrt()).collect(),
        x: grid,
        mean: p.mean,
        signal_variance: model.kernel().signal_variance,
        length_scale: model.kernel().length_scales[0],
        noise_variance: noise,
        log_marginal_likelihood: model.log_marginal_likelihood()?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RelevanceRow {
    pub name: String,
    pub length_scale: f64,
    pub ratio: f64,
    pub salient: bool,
    pub planted: bool,
    pub is_noise: bool,
}

/// Plants `relevant` drivers among `irrelevant` distractors, fits an ARD GP
/// with the noise baseline and returns the ranking.
pub fn relevance_demo(
    days: usize,
    relevant: usize,
    irrelevant: usize,
    snr: f64,
    seed: u64,
) -> Result<Vec<RelevanceRow>> {
    let spec = SyntheticSpec {
        n_days: days,
        n_relevant: relevant,
        n_irrelevant: irrelevant,
        signal_to_noise: snr,
        seed,
    };
    let (matrix, truth) = generate_synthetic(&spec)?;
    let opts = FitOptions {
        restarts: 2,
        seed,
        ..FitOptions::default()
    };
    let (_, out, _) = relevance_fit(&matrix, &opts)?;
    Ok(out
        .report
        .entries
        .into_iter()
        .map(|e| RelevanceRow {
            planted: truth.relevant.contains(&e.name),
            name: e.name,
            length_scale: e.length_scale,
            ratio: e.ratio,
            salient: e.salient,
            is_noise: e.is_noise,
        })
        .collect())
}

fn to_js<T: Serialize>(r: Result<T>) -> std::result::Result<String, JsValue> {
    r.and_then(|v| Ok(serde_json::to_string(&v)?))
        .map_err(|e| JsValue::from_str(&e.to_string()))
}

fn family(name: &str) -> std::result::Result<KernelFamily, JsValue> {
    name.parse().map_err(|e: Error| JsValue::from_str(&e.to_string()))
}

#[wasm_bindgen(js_name = kernelProfiles)]
pub fn kernel_profiles_js(
    length_scale: f64,
    alpha: f64,
    max_r: f64,
    points: usize,
) -> std::result::Result<String, JsValue> {
    to_js(kernel_profiles(length_scale, alpha, max_r, points))
}

#[wasm_bindgen(js_name = gpPosterior)]
#[allow(clippy::too_many_arguments)]
pub fn gp_posterior_js(
    xs: &[f64],
    ys: &[f64],
    kernel: &str,
    signal_variance: f64,
    length_scale: f64,
    noise_variance: f64,
    fit: bool,
    lo: f64,
    hi: f64,
    points: usize,
) -> std::result::Result<String, JsValue> {
    let req = PosteriorRequest {
        family: family(kernel)?,
        signal_variance,
        length_scale,
        noise_variance,
        fit,
        lo,
        hi,
        points,
    };
    to_js(posterior(xs, ys, &req))
}

#[wasm_bindgen(js_name = relevanceDemo)]
pub fn relevance_demo_js(
    days: usize,
    relevant: usize,
    irrelevant: usize,
    snr: f64,
    seed: u32,
) -> std::result::Result<String, JsValue> {
    to_js(relevance_demo(days, relevant, irrelevant, snr, seed as u64))
}
