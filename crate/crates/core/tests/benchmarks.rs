mod common;

use ardfuse::benchmarks::{
    adaptive_ar, ar_fit, ar_fit_values, ar_forecast, kalman_ar_step, kalman_forecasts, lookahead_ar, KalmanArState,
};
use common::*;

#[test]
fn adaptive_ar_and_kalman_sanity() {
    let v = criterion_benchmarks();
    assert!(v.passed, "{}", v.detail);
}

#[test]
fn ar_fit_recovers_phi_on_a_nearly_noiseless_stream() {
    let x = ar1_series(1, 500, 0.5, 1e-3);
    let m = ar_fit_values(&x, 1).unwrap();
    assert!((m.coefficients[0] - 0.5).abs() < 0.05);
}

#[test]
fn ar1_closed_form() {
    let x = ar1_series(2, 300, 0.3, 1.0);
    let m = ar_fit_values(&x, 1).unwrap();
    let (a, b) = (&x[..x.len() - 1], &x[1..]);
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let cov: f64 = a.iter().zip(b).map(|(u, v)| (u - ma) * (v - mb)).sum();
    let var: f64 = a.iter().map(|u| (u - ma).powi(2)).sum();
    assert!((m.coefficients[0] - cov / var).abs() < 1e-10);
    assert!((m.intercept - (mb - cov / var * ma)).abs() < 1e-10);
}

#[test]
fn residuals_are_orthogonal_to_the_design() {
    let x = ar1_series(3, 400, 0.2, 1.0);
    let p = 3;
    let m = ar_fit_values(&x, p).unwrap();
    let mut dots = vec![0.0; p + 1];
    for t in p..x.len() {
        let hist: Vec<f64> = x[..t].to_vec();
        let e = x[t] - ar_forecast(&m, &hist).unwrap();
        dots[0] += e;
        for i in 0..p {
            dots[i + 1] += e * x[t - 1 - i];
        }
    }
    for d in dots {
        assert!(d.abs() < 1e-8, "{d}");
    }
}

#[test]
fn kalman_two_step_hand_example() {
    // p = 1, q = 0, r = 1, prior variance 1, state 0.
    let s0 = KalmanArState::new(1, 0.0, 1.0, 1.0).unwrap();
    let (s1, f1) = kalman_ar_step(&s0, &[1.0], 2.0).unwrap();
    assert_eq!(f1, 0.0);
    // gain = 1/(1+1) = 0.5, beta = 1, P = 0.5
    assert!((s1.state[0] - 1.0).abs() < 1e-12);
    assert!((s1.covariance[0] - 0.5).abs() < 1e-12);
    let (s2, f2) = kalman_ar_step(&s1, &[2.0], 3.0).unwrap();
    assert!((f2 - 2.0).abs() < 1e-12);
    // S = 4·0.5 + 1 = 3, gain = 1/3, beta = 1 + (3 − 2)/3, P = 0.5 − 0.5·2·(1/3)·... = 1/6
    assert!((s2.state[0] - 4.0 / 3.0).abs() < 1e-12);
    assert!((s2.covariance[0] - 1.0 / 6.0).abs() < 1e-12);
}

#[test]
fn forecasts_never_see_the_future() {
    let x = ar1_series(4, 400, 0.4, 1.0);
    let mut y = x.clone();
    y[300..].reverse();
    let (a, b) = (series(x), series(y));
    let fa = adaptive_ar(&a, 2, 100).unwrap();
    let fb = adaptive_ar(&b, 2, 100).unwrap();
    let la = lookahead_ar(&a, 2, 250).unwrap();
    let lb = lookahead_ar(&b, 2, 250).unwrap();
    let ka = kalman_forecasts(&a, 2, 1e-4, 1.0, 250).unwrap();
    let kb = kalman_forecasts(&b, 2, 1e-4, 1.0, 250).unwrap();
    for (u, v) in [(&fa, &fb), (&la, &lb), (&ka, &kb)] {
        let cut = u.dates().iter().position(|d| *d > day(300)).unwrap();
        assert_eq!(&u.values()[..cut], &v.values()[..cut]);
    }
}

#[test]
fn lookahead_uses_a_single_fit() {
    let x = series(ar1_series(5, 300, 0.4, 1.0));
    let m = ar_fit(&x.tail_from(0).restrict_to(&x.dates()[..200]), 1).unwrap();
    let f = lookahead_ar(&x, 1, 200).unwrap();
    for (i, v) in f.values().iter().enumerate() {
        let want = m.intercept + m.coefficients[0] * x.values()[199 + i];
        assert!((v - want).abs() < 1e-12);
    }
}
