mod common;

use ardfuse::features::technical::{log_returns, TechnicalFeatures};
use common::*;

#[test]
fn indicators_match_independent_recurrences() {
    let v = criterion_indicators(100);
    assert!(v.passed, "{}", v.detail);
}

#[test]
fn technical_features_share_one_index_after_burn_in() {
    let prices = series(random_prices(3, 200));
    let t = TechnicalFeatures::compute(&prices).unwrap();
    let first = t.return_t.dates().to_vec();
    for s in t.as_list() {
        assert_eq!(s.dates(), &first[..]);
    }
    assert_eq!(first[0], prices.dates()[TechnicalFeatures::burn_in()]);
}

#[test]
fn log_returns_hand_case() {
    let r = log_returns(&series(vec![100.0, 110.0, 99.0])).unwrap();
    assert!((r.values()[0] - (1.1f64).ln()).abs() < 1e-15);
    assert!((r.values()[1] - (0.9f64).ln()).abs() < 1e-15);
    assert_eq!(r.dates()[0], day(1));
}

#[test]
fn features_on_a_prefix_equal_the_full_run() {
    let v = random_prices(9, 300);
    let full = TechnicalFeatures::compute(&series(v.clone())).unwrap();
    let head = TechnicalFeatures::compute(&series(v[..120].to_vec())).unwrap();
    for (a, b) in full.as_list().iter().zip(head.as_list()) {
        assert_eq!(b.values(), &a.values()[..b.len()]);
    }
}
