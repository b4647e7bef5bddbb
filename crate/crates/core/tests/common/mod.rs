//! Criterion evaluators shared by the integration suites and the acceptance
//! target. Each returns a verdict with a one-line detail string.

#![allow(dead_code)]

use std::path::Path;
use std::time::{Duration, Instant};

use ardfuse::benchmarks::{adaptive_ar, ar_fit_values, kalman_filter, KalmanArState};
use ardfuse::features::options::{directionality, fit_gamma_d, fit_viscosity_params, viscosity_series, Grid};
use ardfuse::features::technical::{ema, macd, signal_line, sma};
use ardfuse::gp::{kfold_kernel_select, log_marginal_likelihood, Hyperparameters};
use ardfuse::ingest::{OptionEntry, OptionsChainSnapshot};
use ardfuse::matrix::Column;
use ardfuse::pipeline::{relevance_fit, run_pipeline, RunConfig};
use ardfuse::stats::t_test_corr;
use ardfuse::synthetic::{generate_synthetic, weekday_calendar, SyntheticSpec};
use ardfuse::{
    Date, DatedSeries, Distance, FeatureMatrix, FitOptions, GpModel, KernelFamily, KernelSpec, NOISE_COLUMN,
};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub struct Verdict {
    pub passed: bool,
    pub detail: String,
}

impl Verdict {
    fn new(passed: bool, detail: impl Into<String>) -> Self {
        Self {
            passed,
            detail: detail.into(),
        }
    }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

pub fn day(k: usize) -> Date {
    Date::from_ymd_opt(2013, 1, 1).unwrap() + chrono::Days::new(k as u64)
}

pub fn series(values: Vec<f64>) -> DatedSeries {
    let dates = (0..values.len()).map(day).collect();
    DatedSeries::new("x", dates, values).unwrap()
}

pub fn timed<T>(f: impl FnOnce() -> T) -> (T, Duration) {
    let t = Instant::now();
    let v = f();
    (v, t.elapsed())
}

// ---------------------------------------------------------------- published correlations

/// (feature, Pearson r, Spearman r, Pearson p, Spearman p) at N = 503.
pub const PUBLISHED_CORRELATIONS: [(&str, f64, f64, f64, f64); 12] = [
    ("Return(t)", -0.0336, -0.0862, 0.4524, 0.0534),
    ("50dSMA", -0.0451, -0.1123, 0.3130, 0.0117),
    ("MACD", -0.1403, -0.1576, 0.0016, 0.0004),
    ("Signal Line", -0.0170, -0.0365, 0.7034, 0.4138),
    ("Stocktwits", -0.1103, -0.1247, 0.0133, 0.0051),
    ("Twitter", -0.0287, -0.0539, 0.5201, 0.2275),
    ("Stocktwits Change", -0.0581, -0.0658, 0.1933, 0.1406),
    ("Twitter Change", 0.0269, 0.0215, 0.5474, 0.6305),
    ("Directionality", 0.1011, 0.1135, 0.0234, 0.0108),
    ("Viscosity", -0.2262, -0.1831, 0.0001, 0.0001),
    ("Broker State", 0.0348, 0.0159, 0.4361, 0.7220),
    ("Broker Change", 0.0024, 0.0263, 0.9564, 0.5562),
];

pub const PUBLISHED_N: usize = 503;
pub const P_TOLERANCE: f64 = 0.0005;

pub struct PCheck {
    pub feature: &'static str,
    pub column: &'static str,
    pub r: f64,
    pub printed: f64,
    pub computed: f64,
    /// Some r′ within the printed r's 4-decimal rounding interval gives the
    /// printed p to tolerance.
    pub consistent_with_rounding: bool,
}

impl PCheck {
    pub fn strict(&self) -> bool {
        (self.computed - self.printed).abs() <= P_TOLERANCE
    }
}

pub fn p_of(r: f64) -> f64 {
    t_test_corr(r, PUBLISHED_N).unwrap().p
}

fn rounding_consistent(r: f64, printed: f64) -> bool {
    (0..=100).any(|i| {
        let rr = r - 5e-5 + 1e-4 * i as f64 / 100.0;
        (p_of(rr) - printed).abs() <= P_TOLERANCE
    })
}

pub fn published_checks() -> Vec<PCheck> {
    let mut out = Vec::new();
    for (feature, rp, rs, pp, ps) in PUBLISHED_CORRELATIONS {
        for (column, r, printed) in [("pearson", rp, pp), ("spearman", rs, ps)] {
            out.push(PCheck {
                feature,
                column,
                r,
                printed,
                computed: p_of(r),
                consistent_with_rounding: rounding_consistent(r, printed),
            });
        }
    }
    out
}

pub fn criterion_published_p_values() -> Verdict {
    let checks = published_checks();
    let strict = checks.iter().filter(|c| c.strict()).count();
    let misses: Vec<String> = checks
        .iter()
        .filter(|c| !c.strict())
        .map(|c| format!("{} {} p={:.4} vs {:.4}", c.feature, c.column, c.computed, c.printed))
        .collect();
    let rounding = checks.iter().filter(|c| c.consistent_with_rounding).count();
    Verdict::new(
        misses.is_empty(),
        format!(
            "{strict}/{} (r, p) pairs within ±{P_TOLERANCE}; {rounding}/{} consistent within r's rounding interval{}",
            checks.len(),
            checks.len(),
            if misses.is_empty() {
                String::new()
            } else {
                format!("; misses: {}", misses.join(", "))
            }
        ),
    )
}

// ------------------------------------------------------- GP oracle

/// Independent kernel: scaled distance then the closed-form family.
pub fn oracle_kernel(spec: &KernelSpec, a: &[f64], b: &[f64]) -> f64 {
    let l = |i: usize| {
        if spec.length_scales.len() == 1 {
            spec.length_scales[0]
        } else {
            spec.length_scales[i]
        }
    };
    let r = match spec.distance {
        Distance::Euclidean => a
            .iter()
            .zip(b)
            .enumerate()
            .map(|(i, (x, y))| ((x - y) / l(i)).powi(2))
            .sum::<f64>()
            .sqrt(),
        Distance::Manhattan => a
            .iter()
            .zip(b)
            .enumerate()
            .map(|(i, (x, y))| ((x - y) / l(i)).abs())
            .sum(),
    };
    let s = spec.signal_variance;
    match spec.family {
        KernelFamily::SquaredExponential => s * (-r * r / 2.0).exp(),
        KernelFamily::RationalQuadratic => s * (1.0 + r * r / (2.0 * spec.alpha)).powf(-spec.alpha),
        KernelFamily::Matern12 => s * (-r).exp(),
        KernelFamily::Matern32 => {
            let z = 3f64.sqrt() * r;
            s * (1.0 + z) * (-z).exp()
        }
        KernelFamily::Matern52 => {
            let z = 5f64.sqrt() * r;
            s * (1.0 + z + z * z / 3.0) * (-z).exp()
        }
    }
}

pub fn random_spec(rng: &mut ChaCha8Rng, family: KernelFamily, d: usize) -> KernelSpec {
    let ls = (0..d).map(|_| (rng.random_range(-1.0..1.0f64)).exp()).collect();
    let distance = if rng.random_bool(0.5) {
        Distance::Euclidean
    } else {
        Distance::Manhattan
    };
    KernelSpec::ard(family, rng.random_range(0.5..2.0), ls)
        .with_alpha(rng.random_range(0.3..3.0))
        .with_distance(distance)
}

/// Largest mean and variance discrepancy between `GpModel::predict` and
/// conditioning the joint Gaussian directly, over one random problem.
pub fn oracle_discrepancy(seed: u64, family: KernelFamily) -> (f64, f64) {
    let mut rng = rng(seed);
    let n = rng.random_range(1..=10usize);
    let d = rng.random_range(1..=4usize);
    let m = rng.random_range(1..=5usize);
    let spec = random_spec(&mut rng, family, d);
    let noise = rng.random_range(1e-3..0.5);
    let x: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..d).map(|_| 2.0 * normal(&mut rng)).collect())
        .collect();
    let q: Vec<Vec<f64>> = (0..m)
        .map(|_| (0..d).map(|_| 2.0 * normal(&mut rng)).collect())
        .collect();
    let y: Vec<f64> = (0..n).map(|_| normal(&mut rng)).collect();
    let xm = DMatrix::from_fn(n, d, |i, j| x[i][j]);
    let names = (0..d).map(|i| format!("x{i}")).collect();
    let model = GpModel::new(spec.clone(), noise, names, xm, &y).unwrap();
    let p = model.predict(&q).unwrap();

    let ybar = y.iter().sum::<f64>() / n as f64;
    let a = DMatrix::from_fn(n, n, |i, j| {
        oracle_kernel(&spec, &x[i], &x[j]) + if i == j { noise + model.jitter() } else { 0.0 }
    });
    let a_inv = a.try_inverse().unwrap();
    let mut worst = (0.0f64, 0.0f64);
    for (k, qk) in q.iter().enumerate() {
        let ks: Vec<f64> = x.iter().map(|xi| oracle_kernel(&spec, qk, xi)).collect();
        let mut mean = ybar;
        let mut var = oracle_kernel(&spec, qk, qk);
        for i in 0..n {
            for j in 0..n {
                mean += ks[i] * a_inv[(i, j)] * (y[j] - ybar);
                var -= ks[i] * a_inv[(i, j)] * ks[j];
            }
        }
        worst.0 = worst.0.max((p.mean[k] - mean).abs());
        worst.1 = worst.1.max((p.variance[k] - var.max(0.0)).abs());
    }
    worst
}

pub fn criterion_gp_oracle(problems: usize) -> Verdict {
    let mut worst = (0.0f64, 0.0f64);
    for s in 0..problems {
        let family = KernelFamily::ALL[s % 5];
        let (dm, dv) = oracle_discrepancy(1000 + s as u64, family);
        worst = (worst.0.max(dm), worst.1.max(dv));
    }
    Verdict::new(
        worst.0 < 1e-8 && worst.1 < 1e-8,
        format!(
            "{problems} problems, max |Δmean| {:.2e}, max |Δvar| {:.2e} (tol 1e-8)",
            worst.0, worst.1
        ),
    )
}

// --------------------------------------------------------- LML gradient

/// ‖analytic − central difference‖ / ‖central difference‖ at one random point.
pub fn gradient_rel_error(seed: u64, family: KernelFamily) -> f64 {
    let mut rng = rng(seed);
    let n = rng.random_range(8..=25usize);
    let d = rng.random_range(1..=3usize);
    let mut spec = random_spec(&mut rng, family, d);
    spec.distance = Distance::Euclidean;
    let hp = Hyperparameters {
        kernel: spec,
        noise_variance: rng.random_range(0.01..0.5),
    };
    let x = DMatrix::from_fn(n, d, |_, _| normal(&mut rng));
    let y: Vec<f64> = (0..n).map(|_| normal(&mut rng)).collect();
    let g = log_marginal_likelihood(&hp, &x, &y).unwrap().gradient;
    let theta = hp.to_log();
    let h = 1e-5;
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..theta.len() {
        let mut up = theta.clone();
        let mut dn = theta.clone();
        up[i] += h;
        dn[i] -= h;
        let fu = log_marginal_likelihood(&hp.from_log(&up), &x, &y).unwrap().value;
        let fd = log_marginal_likelihood(&hp.from_log(&dn), &x, &y).unwrap().value;
        let fdg = (fu - fd) / (2.0 * h);
        num += (g[i] - fdg).powi(2);
        den += fdg.powi(2);
    }
    (num / den).sqrt()
}

pub fn criterion_lml_gradient(points: usize) -> Verdict {
    let mut worst = 0.0f64;
    let mut worst_family = "";
    for family in KernelFamily::ALL {
        for s in 0..points {
            let e = gradient_rel_error(5000 + s as u64 * 7 + family as u64, family);
            if e > worst {
                worst = e;
                worst_family = family.name();
            }
        }
    }
    Verdict::new(
        worst < 1e-5,
        format!("{points} points x 5 families, worst relative error {worst:.2e} ({worst_family}), tol 1e-5"),
    )
}

// ---------------------------------------------------------- ARD recovery

pub struct ArdTally {
    pub seeds: usize,
    /// Both relevant features outrank the noise baseline.
    pub both_outrank: usize,
    /// Some irrelevant feature reaches ratio ≥ 100.
    pub false_salient: usize,
}

pub fn ard_seed(seed: u64) -> (bool, bool) {
    let spec = SyntheticSpec {
        n_days: 400,
        n_relevant: 2,
        n_irrelevant: 3,
        signal_to_noise: 5.0,
        seed,
    };
    let (m, truth) = generate_synthetic(&spec).unwrap();
    let opts = FitOptions {
        seed,
        ..FitOptions::default()
    };
    let (_, out, _) = relevance_fit(&m, &opts).unwrap();
    let noise = out.report.get(NOISE_COLUMN).unwrap().ratio;
    let both = truth.relevant.iter().all(|f| out.report.get(f).unwrap().ratio > noise);
    let false_salient = truth
        .irrelevant
        .iter()
        .any(|f| out.report.get(f).unwrap().ratio >= 100.0);
    (both, false_salient)
}

pub fn ard_tally(seeds: usize) -> ArdTally {
    let mut t = ArdTally {
        seeds,
        both_outrank: 0,
        false_salient: 0,
    };
    for s in 0..seeds {
        let (both, fs) = ard_seed(s as u64);
        t.both_outrank += usize::from(both);
        t.false_salient += usize::from(fs);
    }
    t
}

pub fn criterion_ard(seeds: usize) -> Verdict {
    let t = ard_tally(seeds);
    let need = (seeds * 95).div_ceil(100);
    let allow = seeds * 10 / 100;
    Verdict::new(
        t.both_outrank >= need && t.false_salient <= allow,
        format!(
            "both relevant above noise in {}/{} (need {need}); irrelevant salient in {}/{} (allow {allow})",
            t.both_outrank, seeds, t.false_salient, seeds
        ),
    )
}

// ------------------------------------------------------- kernel selection

pub const SELECTION_ROWS: usize = 120;

/// One draw from a zero-mean Matérn 3/2 GP on random 1-D inputs, plus noise.
pub fn matern32_sample(seed: u64) -> FeatureMatrix {
    let mut rng = rng(seed);
    let n = SELECTION_ROWS;
    let x: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..10.0)).collect();
    let spec = KernelSpec::isotropic(KernelFamily::Matern32, 1.0, 1.0);
    let k = DMatrix::from_fn(n, n, |i, j| {
        oracle_kernel(&spec, &[x[i]], &[x[j]]) + if i == j { 1e-8 } else { 0.0 }
    });
    let l = k.cholesky().unwrap().unpack();
    let z = nalgebra::DVector::from_fn(n, |_, _| normal(&mut rng));
    let f = l * z;
    let y: Vec<f64> = (0..n).map(|i| f[i] + 0.1 * normal(&mut rng)).collect();
    FeatureMatrix::new(weekday_calendar(day(0), n), vec![Column::new("x", x)], y).unwrap()
}

pub fn selects_matern32(seed: u64) -> bool {
    let m = matern32_sample(seed);
    let opts = FitOptions {
        restarts: 3,
        seed,
        ..FitOptions::default()
    };
    let sel = kfold_kernel_select(
        &m,
        10,
        &[KernelFamily::Matern32, KernelFamily::SquaredExponential],
        &opts,
    )
    .unwrap();
    sel.best == KernelFamily::Matern32
}

pub fn criterion_kernel_selection(seeds: usize) -> Verdict {
    let wins = (0..seeds).filter(|&s| selects_matern32(s as u64)).count();
    let need = (seeds * 80).div_ceil(100);
    Verdict::new(
        wins >= need,
        format!("matern32 chosen over se in {wins}/{seeds} (need {need})"),
    )
}

// ------------------------------------------------ options calibration

/// Snapshots with three expiries and seven strikes, OI drawn at random.
pub fn random_chain(seed: u64, days: usize) -> (Vec<OptionsChainSnapshot>, DatedSeries) {
    let mut rng = rng(seed);
    let mut snaps = Vec::new();
    let mut spots = Vec::new();
    for t in 0..days {
        let date = day(t);
        let spot = 100.0 + 5.0 * normal(&mut rng);
        let expiries = [date + chrono::Days::new(3 + (t % 5) as u64), day(t + 30), day(t + 90)];
        let mut entries = Vec::new();
        for e in expiries {
            for k in 0..7 {
                entries.push(OptionEntry {
                    strike: 85.0 + 5.0 * k as f64,
                    expiry: e,
                    call_oi: rng.random_range(0.0..1000.0f64).round(),
                    put_oi: rng.random_range(0.0..1000.0f64).round(),
                });
            }
        }
        snaps.push(OptionsChainSnapshot::new(date, entries).unwrap());
        spots.push(spot);
    }
    (snaps, series(spots))
}

pub struct CalibrationCase {
    pub planted: (f64, f64, f64),
    pub recovered: (f64, f64, f64),
    pub steps: (f64, f64, f64),
}

impl CalibrationCase {
    pub fn within_one_step(&self) -> bool {
        (self.planted.0 - self.recovered.0).abs() <= self.steps.0 + 1e-12
            && (self.planted.1 - self.recovered.1).abs() <= self.steps.1 + 1e-12
            && (self.planted.2 - self.recovered.2).abs() <= self.steps.2 + 1e-12
    }
}

/// Plants parameters by making the calibration target an exact affine
/// function of the metric at the planted values.
pub fn calibration_case(instance: u64) -> CalibrationCase {
    let (snaps, spots) = random_chain(900 + instance, 80);
    let gd_grid = Grid::default_gamma_d();
    let lv_grid = Grid::default_lambda_v();
    let gv_grid = Grid::default_gamma_v();
    let gamma_d = gd_grid.0[[6, 21, 60][instance as usize % 3]];
    let lambda_v = lv_grid.0[[5, 20, 41][instance as usize % 3]];
    let gamma_v = gv_grid.0[[3, 12, 30][instance as usize % 3]];

    let dir = directionality(&snaps, gamma_d).unwrap();
    let returns = dir.map("r", |v| 1e-5 * v).unwrap();
    let gd = fit_gamma_d(&snaps, &returns, &gd_grid).unwrap();

    let visc = viscosity_series(&snaps, &spots, lambda_v, gamma_v).unwrap();
    let top = visc.values().iter().cloned().fold(f64::MIN, f64::max);
    let abs = visc.map("abs", |v| (top - v) * 1e-3 + 1e-4).unwrap();
    let vf = fit_viscosity_params(&snaps, &spots, &abs, &lv_grid, &gv_grid).unwrap();
    CalibrationCase {
        planted: (gamma_d, lambda_v, gamma_v),
        recovered: (gd.gamma_d, vf.lambda_v, vf.gamma_v),
        steps: (0.005, lv_grid.0[1], gv_grid.0[1]),
    }
}

pub fn criterion_calibration() -> Verdict {
    let cases: Vec<CalibrationCase> = (0..3).map(calibration_case).collect();
    let ok = cases.iter().filter(|c| c.within_one_step()).count();
    let detail = cases
        .iter()
        .map(|c| {
            format!(
                "({:.3},{:.4},{:.4})->({:.3},{:.4},{:.4})",
                c.planted.0, c.planted.1, c.planted.2, c.recovered.0, c.recovered.1, c.recovered.2
            )
        })
        .collect::<Vec<_>>()
        .join(" ");
    Verdict::new(
        ok == cases.len(),
        format!("{ok}/3 instances within one grid step: {detail}"),
    )
}

// ------------------------------------------------------ indicators

pub fn oracle_ema(v: &[f64], k: usize) -> Vec<f64> {
    let a = 2.0 / (k as f64 + 1.0);
    let mut out = vec![v[0]];
    for &p in &v[1..] {
        let prev = *out.last().unwrap();
        out.push(a * p + (1.0 - a) * prev);
    }
    out
}

pub fn oracle_sma(v: &[f64], k: usize) -> Vec<f64> {
    (k..=v.len())
        .map(|end| v[end - k..end].iter().rev().sum::<f64>() / k as f64)
        .collect()
}

pub fn random_prices(seed: u64, n: usize) -> Vec<f64> {
    let mut rng = rng(seed);
    let mut p = 100.0;
    (0..n)
        .map(|_| {
            p *= (0.01 * normal(&mut rng)).exp();
            p
        })
        .collect()
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Worst oracle discrepancy and whether every prefix-truncation check held.
pub fn indicator_check(seed: u64) -> (f64, bool) {
    let v = random_prices(seed, 120 + (seed as usize % 200));
    let s = series(v.clone());
    let e12 = oracle_ema(&v, 12);
    let e26 = oracle_ema(&v, 26);
    let m: Vec<f64> = e12.iter().zip(&e26).map(|(a, b)| a - b).collect();
    let sig_ema = oracle_ema(&m, 9);
    let sig: Vec<f64> = m.iter().zip(&sig_ema).map(|(a, b)| a - b).collect();
    let worst = [
        max_diff(sma(&s, 50).unwrap().values(), &oracle_sma(&v, 50)),
        max_diff(ema(&s, 12).unwrap().values(), &e12),
        max_diff(macd(&s).unwrap().values(), &m),
        max_diff(signal_line(&s).unwrap().values(), &sig),
    ]
    .into_iter()
    .fold(0.0, f64::max);

    let cut = 60 + seed as usize % 50;
    let head = series(v[..cut].to_vec());
    let prefix_ok = [
        (sma(&s, 50).unwrap(), sma(&head, 50).unwrap()),
        (ema(&s, 12).unwrap(), ema(&head, 12).unwrap()),
        (macd(&s).unwrap(), macd(&head).unwrap()),
        (signal_line(&s).unwrap(), signal_line(&head).unwrap()),
    ]
    .iter()
    .all(|(full, part)| part.values() == &full.values()[..part.len()]);
    (worst, prefix_ok)
}

pub fn criterion_indicators(n: usize) -> Verdict {
    let mut worst = 0.0f64;
    let mut prefix = 0;
    for s in 0..n {
        let (w, ok) = indicator_check(s as u64);
        worst = worst.max(w);
        prefix += usize::from(ok);
    }
    Verdict::new(
        worst <= 1e-12 && prefix == n,
        format!("{n} series, max |Δ| {worst:.2e} (tol 1e-12), truncation held on {prefix}/{n}"),
    )
}

// ------------------------------------------------------- benchmarks

pub fn ar1_series(seed: u64, n: usize, phi: f64, sd: f64) -> Vec<f64> {
    let mut rng = rng(seed);
    let mut x = vec![0.0];
    for _ in 1..n {
        let prev = *x.last().unwrap();
        x.push(phi * prev + sd * normal(&mut rng));
    }
    x
}

/// Mean of the rolling AR(1) coefficient over every adaptive window.
pub fn mean_rolling_phi(x: &[f64], w: usize) -> f64 {
    let phis: Vec<f64> = (w..x.len())
        .map(|t| ar_fit_values(&x[t - w..t], 1).unwrap().coefficients[0])
        .collect();
    phis.iter().sum::<f64>() / phis.len() as f64
}

/// Final KF(q=0) state against least squares without intercept.
pub fn kf_ols_distance(seed: u64) -> f64 {
    let mut rng = rng(seed);
    let phi = [0.4, -0.2];
    let n = 3000;
    let mut x = vec![0.0, 0.0];
    for t in 2..n {
        let v = phi[0] * x[t - 1] + phi[1] * x[t - 2] + normal(&mut rng);
        x.push(v);
    }
    let p = 2;
    let rows = n - p;
    let h = DMatrix::from_fn(rows, p, |i, j| x[i + p - 1 - j]);
    let y = nalgebra::DVector::from_fn(rows, |i, _| x[i + p]);
    let ols = (h.transpose() * &h).try_inverse().unwrap() * h.transpose() * y;
    let init = KalmanArState::new(p, 0.0, 1.0, 1e8).unwrap();
    let (_, state) = kalman_filter(&x, &init).unwrap();
    (0..p).map(|i| (state.state[i] - ols[i]).abs()).fold(0.0, f64::max)
}

pub fn criterion_benchmarks() -> Verdict {
    let x = ar1_series(77, 1500, 0.5, 0.01);
    let phi = mean_rolling_phi(&x, 250);
    let forecasts = adaptive_ar(&series(x.clone()), 1, 250).unwrap();
    let dist = kf_ols_distance(78);
    Verdict::new(
        (phi - 0.5).abs() <= 0.05 && dist < 1e-3 && forecasts.len() == x.len() - 250,
        format!("mean rolling phi1 {phi:.4} (0.5 ± 0.05); KF(q=0) vs OLS max |Δ| {dist:.2e} (tol 1e-3)"),
    )
}

// ---------------------------------------------------- end to end

pub fn fixture_config() -> RunConfig {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/market/run.toml");
    RunConfig::from_file(&path).unwrap()
}

/// Numeric artifacts compared for determinism; the manifest embeds their
/// hashes, so it is compared too.
pub const NUMERIC_ARTIFACTS: [&str; 10] = [
    "combined.csv",
    "price_space.json",
    "correlations.json",
    "relevance.json",
    "model.json",
    "forecasts.csv",
    "sweep.csv",
    "benchmarks.csv",
    "metrics.json",
    "manifest.json",
];

pub fn run_fixture(out: &Path) -> ardfuse::pipeline::RunSummary {
    let mut cfg = fixture_config();
    cfg.output.dir = out.to_path_buf();
    run_pipeline(&cfg).unwrap()
}
