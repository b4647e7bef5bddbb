use ardfuse::KernelFamily;
use ardfuse_wasm::{kernel_profiles, posterior, relevance_demo, PosteriorRequest};

#[test]
fn profiles_start_at_one_and_decay() {
    let p = kernel_profiles(1.0, 1.0, 4.0, 41).unwrap();
    assert_eq!(p.r.len(), 41);
    assert_eq!(p.curves.len(), 5);
    for c in &p.curves {
        assert!((c.k[0] - 1.0).abs() < 1e-12, "{}", c.family);
        assert!(c.k.windows(2).all(|w| w[1] <= w[0]), "{}", c.family);
        assert!(*c.k.last().unwrap() < 0.2, "{}", c.family);
    }
    assert!(kernel_profiles(1.0, 1.0, 4.0, 1).is_err());
}

fn request(fit: bool) -> PosteriorRequest {
    PosteriorRequest {
        family: KernelFamily::SquaredExponential,
        signal_variance: 1.0,
        length_scale: 1.0,
        noise_variance: 1e-4,
        fit,
        lo: -1.0,
        hi: 7.0,
        points: 81,
    }
}

#[test]
fn posterior_interpolates_and_reverts_far_away() {
    let xs: Vec<f64> = (0..7).map(f64::from).collect();
    let ys: Vec<f64> = xs.iter().map(|x| x.sin()).collect();
    let p = posterior(&xs, &ys, &request(false)).unwrap();
    // Grid step is 0.1, so x = 3 sits at index 40.
    assert!((p.mean[40] - 3f64.sin()).abs() < 0.02);
    assert!(p.sd[40] < 0.05);
    let far = posterior(
        &xs,
        &ys,
        &PosteriorRequest {
            lo: 40.0,
            hi: 41.0,
            points: 2,
            ..request(false)
        },
    )
    .unwrap();
    let y_mean = ys.iter().sum::<f64>() / 7.0;
    assert!((far.mean[0] - y_mean).abs() < 1e-6);
    assert!((far.sd[0] - (1.0 + 1e-4f64).sqrt()).abs() < 1e-6);
}

#[test]
fn fitted_posterior_reports_its_hyperparameters() {
    let xs: Vec<f64> = (0..20).map(|i| i as f64 * 0.3).collect();
    let ys: Vec<f64> = xs.iter().map(|x| (2.0 * x).sin()).collect();
    let p = posterior(&xs, &ys, &request(true)).unwrap();
    assert_ne!(p.length_scale, 1.0);
    assert!(p.log_marginal_likelihood.is_finite());
    assert!(posterior(&xs, &ys[1..], &request(false)).is_err());
}

#[test]
fn relevance_demo_ranks_planted_drivers_first() {
    let rows = relevance_demo(300, 2, 2, 5.0, 1).unwrap();
    assert_eq!(rows.len(), 5);
    assert!(rows[0].planted && rows[1].planted);
    assert_eq!(rows.iter().filter(|r| r.is_noise).count(), 1);
}
