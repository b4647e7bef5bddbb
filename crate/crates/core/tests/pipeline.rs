mod common;

use std::path::Path;

use ardfuse::gp::GpModel;
use ardfuse::pipeline::{run_pipeline, surface_grid, Manifest, RunConfig};
use ardfuse::synthetic::{generate_market, MarketSpec};
use ardfuse::{Error, ErrorClass, KernelFamily, KernelSpec};
use nalgebra::DMatrix;

fn small_market(dir: &Path) {
    generate_market(&MarketSpec::new(200, 5))
        .unwrap()
        .write_dir(dir)
        .unwrap();
}

fn small_config(dir: &Path, with_options: bool) -> RunConfig {
    let options = if with_options {
        "options = \"options.csv\"\n"
    } else {
        ""
    };
    let text = format!(
        r#"
[data]
prices = "prices.csv"
sentiment = "sentiment.csv"
brokers = "brokers.csv"
{options}
[split]
train_end = "2013-09-02"

[model]
restarts = 2
seed = 4

[adaptive]
window = 60
sweep = [40, 60]
restarts = 1

[benchmarks]
ar_orders = [1]
kf_orders = [1]

[output]
dir = "out"
"#
    );
    RunConfig::from_toml_str(&text, dir).unwrap()
}

#[test]
fn missing_options_domain_is_noted_in_the_manifest() {
    let dir = tempfile::tempdir().unwrap();
    small_market(dir.path());
    let s = run_pipeline(&small_config(dir.path(), false)).unwrap();
    assert_eq!(s.manifest.domains_omitted, vec!["options".to_string()]);
    assert!(s.features.combined.column("directionality").is_none());
    let out = dir.path().join("out");
    for f in [
        "combined.csv",
        "relevance.json",
        "forecasts.csv",
        "sweep.csv",
        "benchmarks.csv",
        "metrics.json",
    ] {
        assert!(out.join(f).exists(), "{f}");
    }
    assert!(!out.join("price_space.json").exists());

    // The manifest alone reproduces the run.
    let text = std::fs::read_to_string(out.join("manifest.json")).unwrap();
    let manifest: Manifest = serde_json::from_str(&text).unwrap();
    let mut cfg = manifest.config.clone();
    cfg.base = dir.path().to_path_buf();
    assert_eq!(cfg.hash(), manifest.config_hash);
    let forecasts = std::fs::read(out.join("forecasts.csv")).unwrap();
    run_pipeline(&cfg).unwrap();
    assert_eq!(std::fs::read(out.join("forecasts.csv")).unwrap(), forecasts);
}

#[test]
fn all_four_domains_with_kernel_selection() {
    let dir = tempfile::tempdir().unwrap();
    small_market(dir.path());
    let mut cfg = small_config(dir.path(), true);
    cfg.model.select_kernel = true;
    cfg.model.folds = 3;
    cfg.model.candidates = vec![KernelFamily::Matern32, KernelFamily::SquaredExponential];
    cfg.model.features = vec!["return_t".into(), "stocktwits".into(), "directionality".into()];
    let s = run_pipeline(&cfg).unwrap();
    assert!(s.manifest.domains_omitted.is_empty());
    assert!(dir.path().join("out/kernel_selection.json").exists());
    assert!(dir.path().join("out/price_space.json").exists());
    assert_eq!(s.relevance.report.entries.len(), 4);
    assert_eq!(
        s.manifest.artifacts.len(),
        std::fs::read_dir(dir.path().join("out")).unwrap().count() - 1
    );
}

#[test]
fn stage_errors_name_the_stage_and_keep_their_class() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), false);
    let e = run_pipeline(&cfg).unwrap_err();
    assert!(matches!(e, Error::Stage { stage: "ingest", .. }), "{e}");
    assert_eq!(e.class(), ErrorClass::Io);
}

fn line_model() -> GpModel {
    // y = x₁ over a grid; the second input is made irrelevant by its scale.
    let mut x = Vec::new();
    let mut y = Vec::new();
    for i in 0..7 {
        for j in 0..7 {
            x.extend([i as f64 - 3.0, j as f64 - 3.0]);
            y.push(i as f64 - 3.0);
        }
    }
    let k = KernelSpec::ard(KernelFamily::SquaredExponential, 4.0, vec![3.0, 1e6]);
    GpModel::new(
        k,
        1e-4,
        vec!["a".into(), "b".into()],
        DMatrix::from_row_slice(49, 2, &x),
        &y,
    )
    .unwrap()
}

#[test]
fn surface_is_monotone_in_the_driver_and_flat_in_the_other() {
    let m = line_model();
    let g = surface_grid(&m, "a", "b", 5).unwrap();
    for row in &g.mean {
        assert!(row.windows(2).all(|w| w[1] > w[0]));
    }
    for i in 0..5 {
        let col: Vec<f64> = g.mean.iter().map(|r| r[i]).collect();
        let spread = col.iter().cloned().fold(f64::MIN, f64::max) - col.iter().cloned().fold(f64::MAX, f64::min);
        assert!(spread < 1e-6, "{spread}");
    }
}

#[test]
fn surface_cells_are_plain_predictions() {
    let m = line_model();
    let g = surface_grid(&m, "b", "a", 1).unwrap();
    assert_eq!(g.mean.len(), 1);
    assert_eq!(g.mean[0].len(), 1);
    assert_eq!(g.percentiles, vec![50.0]);
    let p = m.predict(&[vec![g.y_values[0], g.x_values[0]]]).unwrap();
    assert_eq!(g.mean[0][0], p.mean[0]);
    let zero = m.predict(&[vec![0.0, 0.0]]).unwrap();
    assert_eq!(g.x_values[0], 0.0);
    assert_eq!(g.mean[0][0], zero.mean[0]);
    assert!(surface_grid(&m, "a", "c", 3).is_err());
    assert!(surface_grid(&m, "a", "a", 3).is_err());
    assert!(surface_grid(&m, "a", "b", 0).is_err());
}
