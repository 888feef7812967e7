//! Objective functions used as oracles and diagnostics.
//!
//! With squared Euclidean distances and the normalized indicator
//! `G = Y (YᵀY)^(-1/2)`, `tr(Gᵀ D G)` is exactly twice the k-means sum of
//! squared errors, so both objectives order partitions identically.

use ndarray::ArrayView2;

use crate::error::{Error, Result};
use crate::graph::{DistanceMatrix, FeatureMatrix};
use crate::labels::LabelMatrix;

/// `tr(Gᵀ D G)` with `G = Y` or, when `normalized`, `G = Y (YᵀY)^(-1/2)`.
pub fn trace_objective(y: &LabelMatrix, d: &DistanceMatrix, normalized: bool) -> Result<f64> {
    if y.n_samples() != d.len() {
        return Err(Error::LengthMismatch {
            left: y.n_samples(),
            right: d.len(),
        });
    }
    let sums = d.within_cluster_sums(y.labels(), y.n_clusters());
    if !normalized {
        return Ok(sums.iter().sum());
    }
    let sizes = y.cluster_sizes();
    let mut total = 0.0;
    for (c, (&s, &n)) in sums.iter().zip(&sizes).enumerate() {
        if n == 0 {
            return Err(Error::EmptyCluster { cluster: c });
        }
        total += s / n as f64;
    }
    Ok(total)
}

/// Sum over clusters of squared distances to the cluster mean.
pub fn kmeans_objective(x: &FeatureMatrix, y: &LabelMatrix) -> Result<f64> {
    if y.n_samples() != x.nrows() {
        return Err(Error::LengthMismatch {
            left: y.n_samples(),
            right: x.nrows(),
        });
    }
    let sizes = y.cluster_sizes();
    if let Some(c) = sizes.iter().position(|&n| n == 0) {
        return Err(Error::EmptyCluster { cluster: c });
    }
    let mut means = ndarray::Array2::<f64>::zeros((y.n_clusters(), x.ncols()));
    for (row, &l) in x.view().outer_iter().zip(y.labels()) {
        let mut m = means.row_mut(l);
        m += &row;
    }
    for (c, mut m) in means.outer_iter_mut().enumerate() {
        m /= sizes[c] as f64;
    }
    Ok(x
        .view()
        .outer_iter()
        .zip(y.labels())
        .map(|(row, &l)| {
            row.iter()
                .zip(means.row(l).iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
        })
        .sum())
}

/// Per-view label subproblem: `α^r · tr(Yᵀ D Y) + (μ/2)·‖Y − S‖_F²`.
pub fn view_label_objective(
    y: &LabelMatrix,
    d: &DistanceMatrix,
    s: ArrayView2<f64>,
    alpha_v: f64,
    r: f64,
    mu: f64,
) -> Result<f64> {
    let trace = trace_objective(y, d, false)?;
    let fit: f64 = y
        .to_dense()
        .iter()
        .zip(s.iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(alpha_v.powf(r) * trace + 0.5 * mu * fit)
}
