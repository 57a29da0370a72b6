//! k-means in its linear-algebraic form, exact enumeration for tiny
//! instances, and normalized spectral clustering.
//!
//! Labels are 0-based in memory (`0..k`) and 1-based in every file format.

mod exhaustive;
mod kmeans;
mod spectral;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::features::FeatureMatrix;

pub use exhaustive::{exact_optimum, EXACT_MAX_SAMPLES};
pub use kmeans::{kmeans, kmeans_with, KmeansConfig, KmeansResult, RestartReport};
pub use spectral::{affinity_matrix, median_bandwidth, spectral, spectral_with, Bandwidth, SpectralConfig};

/// A hard partition of the rows of a feature matrix into `k` non-empty
/// clusters, together with its k-means objective on that matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterAssignment {
    pub labels: Vec<usize>,
    pub k: usize,
    pub objective: f64,
    pub cluster_sizes: Vec<usize>,
}

impl ClusterAssignment {
    /// Validate `labels` against `a` and score them with the
    /// sum-of-squares objective.
    pub fn from_labels(a: &FeatureMatrix, labels: Vec<usize>, k: usize) -> Result<Self> {
        if labels.len() != a.nrows() {
            return Err(Error::ShapeMismatch(format!(
                "{} labels for {} samples",
                labels.len(),
                a.nrows()
            )));
        }
        let cluster_sizes = cluster_sizes(&labels, k)?;
        if let Some(empty) = cluster_sizes.iter().position(|&s| s == 0) {
            return Err(Error::InvalidArg(format!("cluster {} is empty", empty + 1)));
        }
        let objective = objective_sumsq(a.matrix(), &labels, k);
        if !objective.is_finite() {
            return Err(Error::NumericalFailure("non-finite k-means objective".into()));
        }
        Ok(Self {
            labels,
            k,
            objective,
            cluster_sizes,
        })
    }

    /// Normalized indicator `X` (m × k): `X_ij = 1/√s_j` when sample `i`
    /// belongs to cluster `j`.
    pub fn indicator(&self) -> DMatrix<f64> {
        let mut x = DMatrix::zeros(self.labels.len(), self.k);
        for (i, &c) in self.labels.iter().enumerate() {
            x[(i, c)] = 1.0 / (self.cluster_sizes[c] as f64).sqrt();
        }
        x
    }

    /// Labels shifted to the 1-based convention used in files.
    pub fn labels_one_based(&self) -> Vec<usize> {
        self.labels.iter().map(|l| l + 1).collect()
    }
}

fn cluster_sizes(labels: &[usize], k: usize) -> Result<Vec<usize>> {
    let mut sizes = vec![0; k];
    for &l in labels {
        if l >= k {
            return Err(Error::InvalidArg(format!("label {} outside 1..={k}", l + 1)));
        }
        sizes[l] += 1;
    }
    Ok(sizes)
}

/// Σ_i ‖a_i − μ(a_i)‖² with each centroid the mean of its cluster.
/// Empty clusters contribute nothing.
pub fn objective_sumsq(a: &DMatrix<f64>, labels: &[usize], k: usize) -> f64 {
    let centroids = centroids(a, labels, k);
    labels
        .iter()
        .enumerate()
        .map(|(i, &c)| squared_distance_to(a, i, &centroids, c))
        .sum()
}

pub(crate) fn centroids(a: &DMatrix<f64>, labels: &[usize], k: usize) -> DMatrix<f64> {
    let n = a.ncols();
    let mut sums = DMatrix::zeros(k, n);
    let mut counts = vec![0usize; k];
    for (i, &c) in labels.iter().enumerate() {
        counts[c] += 1;
        for j in 0..n {
            sums[(c, j)] += a[(i, j)];
        }
    }
    for (c, &count) in counts.iter().enumerate() {
        if count > 0 {
            sums.row_mut(c).scale_mut(1.0 / count as f64);
        }
    }
    sums
}

pub(crate) fn squared_distance_to(a: &DMatrix<f64>, i: usize, centers: &DMatrix<f64>, c: usize) -> f64 {
    (0..a.ncols())
        .map(|j| {
            let d = a[(i, j)] - centers[(c, j)];
            d * d
        })
        .sum()
}

/// The same objective in Frobenius form, `‖A − X Xᵀ A‖_F²`.
pub fn objective_frobenius(a: &FeatureMatrix, assignment: &ClusterAssignment) -> Result<f64> {
    if assignment.labels.len() != a.nrows() {
        return Err(Error::ShapeMismatch(format!(
            "{} labels for {} samples",
            assignment.labels.len(),
            a.nrows()
        )));
    }
    let x = assignment.indicator();
    let am = a.matrix();
    let resid = am - &x * (x.transpose() * am);
    Ok(resid.norm_squared())
}
