//! k-fold cross-validated kernel family selection.

use serde::{Deserialize, Serialize};

use super::fit::{fit, FitOptions};
use crate::error::{Error, Result};
use crate::kernels::KernelFamily;
use crate::matrix::{center_scale, mean_sd, FeatureMatrix};
use crate::stats::rmse;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvRow {
    pub family: KernelFamily,
    /// Mean over folds of held-out RMSE divided by the standard deviation of
    /// the full target.
    pub score: f64,
    pub fold_scores: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelSelection {
    pub best: KernelFamily,
    pub table: Vec<CvRow>,
}

/// Contiguous, unshuffled fold boundaries; the first `n % k` folds get one extra row.
pub fn fold_ranges(n: usize, k: usize) -> Vec<std::ops::Range<usize>> {
    let base = n / k;
    let extra = n % k;
    let mut start = 0;
    (0..k)
        .map(|f| {
            let len = base + usize::from(f < extra);
            let r = start..start + len;
            start += len;
            r
        })
        .collect()
}

/// Picks the family with the lowest mean held-out score over `k` contiguous
/// folds. Each fold standardizes with its own training rows. Ties go to the
/// earlier family in `families`.
pub fn kfold_kernel_select(
    matrix: &FeatureMatrix,
    k: usize,
    families: &[KernelFamily],
    opts: &FitOptions,
) -> Result<KernelSelection> {
    let n = matrix.n_rows();
    if families.is_empty() {
        return Err(Error::Validation("no candidate kernel families".into()));
    }
    if k < 2 || k > n {
        return Err(Error::Validation(format!("need 2 <= k <= rows ({n}), got k = {k}")));
    }
    let folds = fold_ranges(n, k);
    if n - folds[0].len() < 2 {
        return Err(Error::InsufficientData(format!(
            "fold training sets would have fewer than 2 rows (n = {n}, k = {k})"
        )));
    }
    let (_, sd) = mean_sd(matrix.target());
    if !(sd > 0.0) {
        return Err(Error::UndefinedCorrelation("constant target".into()));
    }

    let mut table = Vec::with_capacity(families.len());
    for &family in families {
        let mut fold_scores = Vec::with_capacity(k);
        for fold in &folds {
            let train_idx: Vec<usize> = (0..n).filter(|i| !fold.contains(i)).collect();
            let (train, transform) = center_scale(&matrix.take_rows(&train_idx))?;
            let test = transform.apply(&matrix.rows(fold.clone()))?;
            let model = fit(&train, &FitOptions { family, ..opts.clone() })?;
            let pred = model.predict_design(&test.design())?;
            fold_scores.push(rmse(&pred.mean, test.target()) / sd);
        }
        let score = fold_scores.iter().sum::<f64>() / k as f64;
        table.push(CvRow {
            family,
            score,
            fold_scores,
        });
    }
    let best = table
        .iter()
        .fold(None::<&CvRow>, |b, r| match b {
            Some(b) if b.score <= r.score => Some(b),
            _ => Some(r),
        })
        .unwrap()
        .family;
    Ok(KernelSelection { best, table })
}
