//! Online Gaussian Process forecasting over fused financial data streams.
//!
//! The crate turns four raw data domains (prices, sentiment indices, options
//! open interest and broker recommendations) into a date-aligned feature
//! matrix, fits ARD Gaussian Processes whose length scales rank feature
//! relevance against an injected noise baseline, and evaluates rolling-window
//! forecasts against autoregressive and Kalman-filter baselines.

pub mod adaptive;
pub mod benchmarks;
pub mod error;
pub mod features;
pub mod gp;
pub mod ingest;
pub mod kernels;
pub mod matrix;
pub mod optim;
pub mod pipeline;
pub mod series;
pub mod stats;
pub mod synthetic;

pub use error::{Error, ErrorClass, Result};
pub use gp::{FitOptions, GpModel, RelevanceReport};
pub use kernels::{Distance, KernelFamily, KernelSpec};
pub use matrix::{FeatureMatrix, NOISE_COLUMN};
pub use series::{Date, DatedSeries};

/// Maps `f` over `items`, in parallel when the `parallel` feature is on.
/// Output order always matches input order.
pub(crate) fn par_map<T: Send, R: Send>(items: Vec<T>, f: impl Fn(T) -> R + Sync + Send) -> Vec<R> {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        items.into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.into_iter().map(f).collect()
    }
}
