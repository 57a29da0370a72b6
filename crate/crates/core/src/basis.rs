//! Tensor-product Fourier basis on `[0, 1]²` and per-image coefficient fits.
//!
//! The 1D family is `φ_1 = 1`, `φ_{2j} = √2 sin(2πju)`,
//! `φ_{2j+1} = √2 cos(2πju)` for `j = 1..(K-1)/2`, sampled at the pixel
//! midpoints `u_g = (g - 0.5) / G`. On that grid the columns are exactly
//! orthogonal (up to rounding) whenever `K <= G`, with `ΦᵀΦ = G·I`.
//!
//! An image `X` (height × width) is represented by the `K × K` block `B`
//! minimizing `‖X − Φ_s B Φ_tᵀ‖_F`, flattened row-major so that entry
//! `k·K + l` multiplies `φ_k(s) φ_l(t)`.

use std::f64::consts::{PI, SQRT_2};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::image_io::Dataset;
use crate::linalg;
use crate::par::{self, Execution};

/// Number of 1D basis functions per axis (odd).
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct BasisConfig {
    pub k: usize,
}

impl BasisConfig {
    pub fn new(k: usize) -> Result<Self> {
        if k == 0 || k.is_multiple_of(2) {
            return Err(Error::InvalidConfig(format!("basis size K must be odd and >= 1, got {k}")));
        }
        Ok(Self { k })
    }

    /// Number of tensor-product coefficients, `K²`.
    pub fn n_coeffs(&self) -> usize {
        self.k * self.k
    }

    pub fn check_grid(&self, height: usize, width: usize) -> Result<()> {
        Self::new(self.k)?;
        if self.k > height.min(width) {
            return Err(Error::InvalidConfig(format!(
                "basis size K = {} exceeds the smaller grid side {}",
                self.k,
                height.min(width)
            )));
        }
        Ok(())
    }
}

/// The 1D basis sampled on a midpoint grid: `values[(g, k)] = φ_k(u_g)`.
#[derive(Debug, Clone)]
pub struct BasisMatrix {
    pub values: DMatrix<f64>,
    pub grid_points: Vec<f64>,
}

fn basis_function(index: usize, u: f64) -> f64 {
    if index == 0 {
        return 1.0;
    }
    let freq = index.div_ceil(2) as f64;
    if index % 2 == 1 {
        SQRT_2 * (2.0 * PI * freq * u).sin()
    } else {
        SQRT_2 * (2.0 * PI * freq * u).cos()
    }
}

pub fn evaluate_basis(k: usize, g: usize) -> Result<BasisMatrix> {
    if k == 0 || k.is_multiple_of(2) || k > g {
        return Err(Error::InvalidConfig(format!(
            "basis size K must be odd with 1 <= K <= G, got K = {k}, G = {g}"
        )));
    }
    let grid_points: Vec<f64> = (1..=g).map(|i| (i as f64 - 0.5) / g as f64).collect();
    let values = DMatrix::from_fn(g, k, |r, c| basis_function(c, grid_points[r]));
    Ok(BasisMatrix {
        values,
        grid_points,
    })
}

/// N × K² matrix of expansion coefficients, one row per image.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientMatrix {
    pub k: usize,
    data: DMatrix<f64>,
}

impl CoefficientMatrix {
    pub fn new(k: usize, data: DMatrix<f64>) -> Result<Self> {
        if data.ncols() != k * k {
            return Err(Error::ShapeMismatch(format!(
                "coefficient matrix has {} columns, expected K² = {}",
                data.ncols(),
                k * k
            )));
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::NumericalFailure("non-finite coefficient".into()));
        }
        Ok(Self { k, data })
    }

    /// Infer `K` from the column count.
    pub fn from_matrix(data: DMatrix<f64>) -> Result<Self> {
        let k = (data.ncols() as f64).sqrt().round() as usize;
        Self::new(k, data)
    }

    pub fn nrows(&self) -> usize {
        self.data.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.data
    }

    pub fn row(&self, i: usize) -> DVector<f64> {
        self.data.row(i).transpose()
    }
}

/// Precomputed basis matrices and their pseudoinverses for one grid size.
#[derive(Debug, Clone)]
pub struct BasisFitter {
    pub config: BasisConfig,
    phi_s: DMatrix<f64>,
    phi_t: DMatrix<f64>,
    pinv_s: DMatrix<f64>,
    pinv_t: DMatrix<f64>,
}

impl BasisFitter {
    pub fn new(config: BasisConfig, height: usize, width: usize) -> Result<Self> {
        config.check_grid(height, width)?;
        let phi_s = evaluate_basis(config.k, height)?.values;
        let phi_t = evaluate_basis(config.k, width)?.values;
        let pinv_s = linalg::pseudo_inverse(&phi_s, 1e-12)?;
        let pinv_t = linalg::pseudo_inverse(&phi_t, 1e-12)?;
        Ok(Self {
            config,
            phi_s,
            phi_t,
            pinv_s,
            pinv_t,
        })
    }

    pub fn height(&self) -> usize {
        self.phi_s.nrows()
    }

    pub fn width(&self) -> usize {
        self.phi_t.nrows()
    }

    pub fn phi_s(&self) -> &DMatrix<f64> {
        &self.phi_s
    }

    pub fn phi_t(&self) -> &DMatrix<f64> {
        &self.phi_t
    }

    /// Least-squares coefficients of one image, flattened row-major.
    pub fn fit(&self, pixels: &DMatrix<f64>) -> Result<DVector<f64>> {
        if pixels.shape() != (self.height(), self.width()) {
            return Err(Error::ShapeMismatch(format!(
                "image is {}x{}, basis fitted for {}x{}",
                pixels.nrows(),
                pixels.ncols(),
                self.height(),
                self.width()
            )));
        }
        let block = &self.pinv_s * pixels * self.pinv_t.transpose();
        Ok(flatten_row_major(&block))
    }

    /// `Φ_s B Φ_tᵀ` for the block `B` stored row-major in `coeffs`.
    pub fn synthesize(&self, coeffs: &[f64]) -> Result<DMatrix<f64>> {
        let k = self.config.k;
        if coeffs.len() != k * k {
            return Err(Error::ShapeMismatch(format!(
                "{} coefficients, expected K² = {}",
                coeffs.len(),
                k * k
            )));
        }
        let block = DMatrix::from_row_slice(k, k, coeffs);
        Ok(&self.phi_s * block * self.phi_t.transpose())
    }
}

fn flatten_row_major(block: &DMatrix<f64>) -> DVector<f64> {
    let (r, c) = block.shape();
    DVector::from_fn(r * c, |i, _| block[(i / c, i % c)])
}

pub fn fit_coefficients(dataset: &Dataset, config: BasisConfig) -> Result<CoefficientMatrix> {
    fit_coefficients_with(dataset, config, Execution::default())
}

/// Per-image fits share only the read-only basis matrices, so the result is
/// identical for either execution strategy.
pub fn fit_coefficients_with(
    dataset: &Dataset,
    config: BasisConfig,
    exec: Execution,
) -> Result<CoefficientMatrix> {
    let fitter = BasisFitter::new(config, dataset.height(), dataset.width())?;
    let images = dataset.images();
    let rows = par::try_map_indexed(images.len(), exec, |i| fitter.fit(images[i].pixels()))?;
    let n_coeffs = config.n_coeffs();
    let data = DMatrix::from_fn(rows.len(), n_coeffs, |i, j| rows[i][j]);
    CoefficientMatrix::new(config.k, data)
}

/// Forward expansion of one coefficient vector on a `height × width` grid.
/// Values are not clamped.
pub fn synthesize_image(
    coeffs: &[f64],
    config: BasisConfig,
    height: usize,
    width: usize,
) -> Result<DMatrix<f64>> {
    config.check_grid(height, width)?;
    let k = config.k;
    if coeffs.len() != k * k {
        return Err(Error::ShapeMismatch(format!(
            "{} coefficients, expected K² = {}",
            coeffs.len(),
            k * k
        )));
    }
    let phi_s = evaluate_basis(k, height)?.values;
    let phi_t = evaluate_basis(k, width)?.values;
    let block = DMatrix::from_row_slice(k, k, coeffs);
    Ok(phi_s * block * phi_t.transpose())
}
