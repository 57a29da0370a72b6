//! Seeded synthetic data with known cluster structure.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::basis::{BasisConfig, BasisFitter};
use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::image_io::{Dataset, ImageGrid};
use crate::rng::{self, Stream};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlantedSpec {
    pub m: usize,
    pub n: usize,
    pub k: usize,
    pub informative: usize,
    /// Distance between any two centroids.
    pub separation: f64,
    pub noise_sd: f64,
    pub seed: u64,
}

/// `k` centroids in `R^dim` with all pairwise distances equal to
/// `separation`: the standard simplex vertices `e_j·separation/√2` mapped
/// isometrically onto the first `k` orthonormal DCT-II vectors of length
/// `dim`, so every coordinate carries signal.
pub fn simplex_centroids(k: usize, dim: usize, separation: f64) -> Result<DMatrix<f64>> {
    if k == 0 || dim < k {
        return Err(Error::InvalidArg(format!(
            "need 1 <= k <= dim for a simplex embedding, got k = {k}, dim = {dim}"
        )));
    }
    let d = dim as f64;
    let dct = |i: usize, q: usize| {
        let w = if q == 0 { (1.0 / d).sqrt() } else { (2.0 / d).sqrt() };
        w * (std::f64::consts::PI * (i as f64 + 0.5) * q as f64 / d).cos()
    };
    let scale = separation / std::f64::consts::SQRT_2;
    Ok(DMatrix::from_fn(k, dim, |j, i| scale * dct(i, j)))
}

/// Cluster sizes as equal as possible, remainder to the lowest indices.
fn balanced_labels(m: usize, k: usize) -> Vec<usize> {
    let base = m / k;
    let extra = m % k;
    (0..k)
        .flat_map(|c| std::iter::repeat_n(c, base + usize::from(c < extra)))
        .collect()
}

/// Planted-cluster feature matrix and its 0-based truth labels. Centroids
/// live in the first `informative` features; every entry gets independent
/// `N(0, noise_sd²)` noise.
pub fn planted_features(spec: &PlantedSpec) -> Result<(FeatureMatrix, Vec<usize>)> {
    let PlantedSpec {
        m,
        n,
        k,
        informative,
        separation,
        noise_sd,
        seed,
    } = *spec;
    if informative > n || k > m || k == 0 || m < 2 {
        return Err(Error::InvalidArg(format!(
            "invalid planted spec: m = {m}, n = {n}, k = {k}, informative = {informative}"
        )));
    }
    if !(separation >= 0.0) || !(noise_sd >= 0.0) {
        return Err(Error::InvalidArg("separation and noise_sd must be >= 0".into()));
    }
    let centroids = simplex_centroids(k, informative, separation)?;
    let labels = balanced_labels(m, k);
    let mut g = rng::stream(seed, Stream::Synthetic);
    let mut data = DMatrix::zeros(m, n);
    for i in 0..m {
        for j in 0..n {
            let center = if j < informative { centroids[(labels[i], j)] } else { 0.0 };
            data[(i, j)] = center + noise_sd * rng::standard_normal(&mut g);
        }
    }
    let names = (0..n)
        .map(|j| if j < informative { format!("inf{}", j + 1) } else { format!("noise{}", j + 1) })
        .collect();
    Ok((FeatureMatrix::new(data)?.with_names(names)?, labels))
}

/// Pixel map `p ↦ scale·p + offset` shared by every generated image.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AffineMap {
    pub scale: f64,
    pub offset: f64,
}

impl AffineMap {
    /// The same map in coefficient space: the offset lands on the constant
    /// basis function.
    pub fn apply_to_coeffs(&self, coeffs: &DVector<f64>) -> DVector<f64> {
        let mut out = coeffs * self.scale;
        out[0] += self.offset;
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlantedImageSpec {
    pub n_images: usize,
    pub height: usize,
    pub width: usize,
    pub basis_k: usize,
    pub groups: usize,
    pub separation: f64,
    pub noise_sd: f64,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct PlantedImages {
    pub dataset: Dataset,
    /// 0-based group of each image.
    pub truth: Vec<usize>,
    /// Coefficients of each image before the pixel map (N × K²).
    pub raw_coeffs: DMatrix<f64>,
    pub map: AffineMap,
}

/// Images whose group structure lives in the K² coefficient space: each
/// image is its group centroid plus Gaussian coefficient noise, synthesized
/// on the grid, then mapped into `[0, 1]` by one affine map for all images.
pub fn planted_images(spec: &PlantedImageSpec) -> Result<PlantedImages> {
    let cfg = BasisConfig::new(spec.basis_k)?;
    cfg.check_grid(spec.height, spec.width)?;
    if spec.n_images < 2 || spec.groups == 0 || spec.groups > spec.n_images {
        return Err(Error::InvalidArg(format!(
            "need 2 <= N and 1 <= groups <= N, got N = {}, groups = {}",
            spec.n_images, spec.groups
        )));
    }
    if !(spec.separation >= 0.0) || !(spec.noise_sd >= 0.0) {
        return Err(Error::InvalidArg("separation and noise_sd must be >= 0".into()));
    }
    let p = cfg.n_coeffs();
    let centroids = simplex_centroids(spec.groups, p, spec.separation)?;
    let truth = balanced_labels(spec.n_images, spec.groups);
    let mut g = rng::stream(spec.seed, Stream::Synthetic);
    let raw = DMatrix::from_fn(spec.n_images, p, |_, _| 0.0);
    let mut raw = raw;
    for i in 0..spec.n_images {
        for j in 0..p {
            raw[(i, j)] = centroids[(truth[i], j)] + spec.noise_sd * rng::standard_normal(&mut g);
        }
    }

    let fitter = BasisFitter::new(cfg, spec.height, spec.width)?;
    let grids: Vec<DMatrix<f64>> = (0..spec.n_images)
        .map(|i| fitter.synthesize(raw.row(i).transpose().as_slice()))
        .collect::<Result<_>>()?;
    let lo = grids.iter().flat_map(|x| x.iter()).cloned().fold(f64::INFINITY, f64::min);
    let hi = grids.iter().flat_map(|x| x.iter()).cloned().fold(f64::NEG_INFINITY, f64::max);
    let map = if hi > lo {
        AffineMap {
            scale: 1.0 / (hi - lo),
            offset: -lo / (hi - lo),
        }
    } else {
        AffineMap {
            scale: 0.0,
            offset: 0.5,
        }
    };

    let width = spec.n_images.to_string().len().max(3);
    let images = grids
        .into_iter()
        .enumerate()
        .map(|(i, x)| {
            let px = x.map(|v| (map.scale * v + map.offset).clamp(0.0, 1.0));
            ImageGrid::new(format!("img{:0width$}", i + 1), px)
        })
        .collect::<Result<Vec<_>>>()?;
    let dataset = Dataset::new(images, Some(truth.iter().map(|g| g + 1).collect()))?;
    Ok(PlantedImages {
        dataset,
        truth,
        raw_coeffs: raw,
        map,
    })
}
