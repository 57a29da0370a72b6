use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::kmeans::{kmeans_with, KmeansConfig};
use super::ClusterAssignment;
use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::linalg;
use crate::par::Execution;

/// Gaussian kernel bandwidth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Bandwidth {
    /// Median of the nonzero pairwise distances.
    Median,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralConfig {
    pub k: usize,
    pub sigma: Bandwidth,
    /// k-means run on the row-normalized embedding; its `k` is overridden.
    pub inner: KmeansConfig,
}

impl SpectralConfig {
    pub fn new(k: usize, seed: u64) -> Self {
        Self {
            k,
            sigma: Bandwidth::Median,
            inner: KmeansConfig::new(k, seed),
        }
    }
}

fn pairwise_sq_distances(a: &DMatrix<f64>) -> DMatrix<f64> {
    let m = a.nrows();
    let mut d = DMatrix::zeros(m, m);
    for i in 0..m {
        for j in (i + 1)..m {
            let v = (a.row(i) - a.row(j)).norm_squared();
            d[(i, j)] = v;
            d[(j, i)] = v;
        }
    }
    d
}

/// Median of the nonzero pairwise Euclidean distances.
pub fn median_bandwidth(a: &FeatureMatrix) -> Result<f64> {
    let sq = pairwise_sq_distances(a.matrix());
    let m = a.nrows();
    let mut dists: Vec<f64> = (0..m)
        .flat_map(|i| ((i + 1)..m).map(move |j| (i, j)))
        .map(|(i, j)| sq[(i, j)].sqrt())
        .filter(|&d| d > 0.0)
        .collect();
    if dists.is_empty() {
        return Err(Error::DegenerateAffinity("all pairwise distances are zero".into()));
    }
    dists.sort_by(f64::total_cmp);
    let n = dists.len();
    Ok(if n % 2 == 1 {
        dists[n / 2]
    } else {
        0.5 * (dists[n / 2 - 1] + dists[n / 2])
    })
}

/// `W_ij = exp(−‖a_i − a_j‖² / (2σ²))` off the diagonal, zero on it.
pub fn affinity_matrix(a: &FeatureMatrix, sigma: f64) -> DMatrix<f64> {
    let sq = pairwise_sq_distances(a.matrix());
    let denom = 2.0 * sigma * sigma;
    DMatrix::from_fn(a.nrows(), a.nrows(), |i, j| {
        if i == j {
            0.0
        } else {
            (-sq[(i, j)] / denom).exp()
        }
    })
}

/// Symmetric-normalized spectral clustering. The returned objective is the
/// k-means objective of the labels on the original features.
pub fn spectral(a: &FeatureMatrix, config: &SpectralConfig) -> Result<ClusterAssignment> {
    spectral_with(a, config, Execution::default())
}

pub fn spectral_with(a: &FeatureMatrix, config: &SpectralConfig, exec: Execution) -> Result<ClusterAssignment> {
    let m = a.nrows();
    let k = config.k;
    if m < 3 {
        return Err(Error::InvalidArg(format!("spectral clustering needs m >= 3, got {m}")));
    }
    if k == 0 || k > m {
        return Err(Error::InvalidArg(format!("need 1 <= k <= m, got k = {k}, m = {m}")));
    }
    let sigma = match config.sigma {
        Bandwidth::Median => median_bandwidth(a)?,
        Bandwidth::Fixed(s) if s > 0.0 && s.is_finite() => {
            if median_bandwidth(a).is_err() {
                return Err(Error::DegenerateAffinity("all pairwise distances are zero".into()));
            }
            s
        }
        Bandwidth::Fixed(s) => return Err(Error::InvalidConfig(format!("sigma must be > 0, got {s}"))),
    };

    let w = affinity_matrix(a, sigma);
    let inv_sqrt_deg: Vec<f64> = w
        .row_iter()
        .map(|r| {
            let d = r.sum();
            if d > 0.0 {
                1.0 / d.sqrt()
            } else {
                0.0
            }
        })
        .collect();
    let laplacian = DMatrix::from_fn(m, m, |i, j| {
        let id = if i == j { 1.0 } else { 0.0 };
        id - inv_sqrt_deg[i] * w[(i, j)] * inv_sqrt_deg[j]
    });
    let (_, vectors) = linalg::symmetric_eigen_desc(&laplacian)?;
    // descending order: the k smallest eigenvalues are the last k columns
    let mut embedding = DMatrix::from_fn(m, k, |i, c| vectors[(i, m - 1 - c)]);
    linalg::normalize_column_signs(&mut embedding);
    for mut row in embedding.row_iter_mut() {
        let norm = row.norm();
        if norm > 0.0 {
            row /= norm;
        }
    }

    let inner = KmeansConfig { k, ..config.inner };
    let embedded = FeatureMatrix::new(embedding)?;
    let result = kmeans_with(&embedded, &inner, exec)?;
    ClusterAssignment::from_labels(a, result.assignment.labels, k)
}
