//! Two-dimensional functional PCA in coefficient space.
//!
//! With an orthonormal tensor-product basis, the covariance operator of the
//! images reduces to the K²×K² matrix `M = (1/N) C_cᵀ C_c` of centered
//! coefficients, its eigenvectors `b_j` give the eigenfunctions
//! `β_j(s,t) = (φ(s) ⊗ φ(t))ᵀ b_j`, and FPC scores are plain dot products
//! `ξ_ij = (C_i − mean)·b_j`.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::basis::{BasisConfig, CoefficientMatrix};
use crate::error::{Error, Result};
use crate::linalg;

/// Negative eigenvalues down to `-NEG_EIGEN_TOL * max(1, λ_1)` are treated
/// as round-off and clamped to zero.
const NEG_EIGEN_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct FpcaModel {
    pub basis: BasisConfig,
    pub mean_coeffs: DVector<f64>,
    /// Retained eigenvalues, non-increasing.
    pub eigenvalues: Vec<f64>,
    /// K² × J, orthonormal columns.
    pub eigenvectors: DMatrix<f64>,
    /// Trace of `M`, i.e. the sum of all eigenvalues.
    pub total_variance: f64,
    pub n_samples: usize,
}

/// N × J matrix of FPC scores.
pub type ScoreMatrix = DMatrix<f64>;

impl FpcaModel {
    pub fn n_components(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn n_coeffs(&self) -> usize {
        self.mean_coeffs.len()
    }

    /// Largest admissible component count for `n` samples and basis `k`.
    pub fn max_components(n: usize, k: usize) -> usize {
        n.saturating_sub(1).min(k * k)
    }
}

pub fn fit_fpca(coeffs: &CoefficientMatrix, n_components: usize) -> Result<FpcaModel> {
    let c = coeffs.matrix();
    let n = c.nrows();
    let p = c.ncols();
    if n < 2 {
        return Err(Error::InvalidArg(format!("FPCA needs at least 2 samples, got {n}")));
    }
    let cap = FpcaModel::max_components(n, coeffs.k);
    if n_components == 0 || n_components > cap {
        return Err(Error::RankDeficient(format!(
            "requested J = {n_components}, but 1 <= J <= min(N-1, K²) = {cap}"
        )));
    }

    let mean = DVector::from_fn(p, |j, _| c.column(j).mean());
    let centered = center(c, &mean);
    let m = centered.transpose() * &centered / n as f64;
    let m = (&m + m.transpose()) * 0.5;
    let (values, mut vectors) = linalg::symmetric_eigen_desc(&m)?;

    let scale = values[0].max(1.0);
    if let Some(bad) = values.iter().find(|&&v| v < -NEG_EIGEN_TOL * scale) {
        return Err(Error::NumericalFailure(format!(
            "covariance eigenvalue {bad:e} is negative beyond round-off"
        )));
    }
    let eigenvalues: Vec<f64> = values.iter().take(n_components).map(|&v| v.max(0.0)).collect();
    vectors = vectors.columns(0, n_components).into_owned();
    linalg::normalize_column_signs(&mut vectors);

    Ok(FpcaModel {
        basis: BasisConfig { k: coeffs.k },
        mean_coeffs: mean,
        eigenvalues,
        eigenvectors: vectors,
        total_variance: linalg::frobenius_sq(&centered) / n as f64,
        n_samples: n,
    })
}

fn center(c: &DMatrix<f64>, mean: &DVector<f64>) -> DMatrix<f64> {
    let mut out = c.clone();
    for mut row in out.row_iter_mut() {
        row -= mean.transpose();
    }
    out
}

/// FPC scores of each coefficient row, in input order.
pub fn transform(model: &FpcaModel, coeffs: &CoefficientMatrix) -> Result<ScoreMatrix> {
    if coeffs.matrix().ncols() != model.n_coeffs() {
        return Err(Error::ShapeMismatch(format!(
            "coefficients have {} columns, model expects {}",
            coeffs.matrix().ncols(),
            model.n_coeffs()
        )));
    }
    Ok(center(coeffs.matrix(), &model.mean_coeffs) * &model.eigenvectors)
}

/// Coefficients rebuilt from the first `j_use` scores:
/// `mean + Σ_{j<j_use} ξ_j b_j`.
pub fn reconstruct(model: &FpcaModel, scores: &[f64], j_use: usize) -> Result<DVector<f64>> {
    if scores.len() != model.n_components() {
        return Err(Error::ShapeMismatch(format!(
            "{} scores, model has {} components",
            scores.len(),
            model.n_components()
        )));
    }
    if j_use > model.n_components() {
        return Err(Error::ShapeMismatch(format!(
            "J_use = {j_use} exceeds retained J = {}",
            model.n_components()
        )));
    }
    let mut out = model.mean_coeffs.clone();
    for (j, &xi) in scores.iter().enumerate().take(j_use) {
        out.axpy(xi, &model.eigenvectors.column(j), 1.0);
    }
    Ok(out)
}

/// One row of the variance-explained table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VarianceRow {
    pub component: usize,
    pub eigenvalue: f64,
    pub fraction: f64,
    pub cumulative: f64,
}

pub fn variance_explained(model: &FpcaModel) -> Vec<VarianceRow> {
    let total = model.total_variance;
    let mut cumulative = 0.0;
    model
        .eigenvalues
        .iter()
        .enumerate()
        .map(|(j, &ev)| {
            let fraction = if total > 0.0 { ev / total } else { 0.0 };
            cumulative += fraction;
            VarianceRow {
                component: j + 1,
                eigenvalue: ev,
                fraction,
                cumulative,
            }
        })
        .collect()
}

/// JSON layout of a saved model. Eigenvectors are stored column-major.
#[derive(Debug, Serialize, Deserialize)]
struct ModelFile {
    k: usize,
    j: usize,
    n_samples: usize,
    total_variance: f64,
    mean: Vec<f64>,
    eigenvalues: Vec<f64>,
    eigenvectors: Vec<f64>,
}

impl FpcaModel {
    pub fn to_json(&self) -> String {
        let file = ModelFile {
            k: self.basis.k,
            j: self.n_components(),
            n_samples: self.n_samples,
            total_variance: self.total_variance,
            mean: self.mean_coeffs.iter().copied().collect(),
            eigenvalues: self.eigenvalues.clone(),
            eigenvectors: self.eigenvectors.as_slice().to_vec(),
        };
        serde_json::to_string_pretty(&file).expect("model serializes")
    }

    pub fn from_json(text: &str) -> std::result::Result<Self, String> {
        let f: ModelFile = serde_json::from_str(text).map_err(|e| e.to_string())?;
        let p = f.k * f.k;
        if f.mean.len() != p || f.eigenvalues.len() != f.j || f.eigenvectors.len() != p * f.j {
            return Err("inconsistent model dimensions".into());
        }
        Ok(Self {
            basis: BasisConfig::new(f.k).map_err(|e| e.to_string())?,
            mean_coeffs: DVector::from_vec(f.mean),
            eigenvalues: f.eigenvalues,
            eigenvectors: DMatrix::from_column_slice(p, f.j, &f.eigenvectors),
            total_variance: f.total_variance,
            n_samples: f.n_samples,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json() + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|m| Error::malformed(path, m))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn coeffs(k: usize, rows: &[&[f64]]) -> CoefficientMatrix {
        let n = rows.len();
        let flat: Vec<f64> = rows.iter().flat_map(|r| r.iter().copied()).collect();
        CoefficientMatrix::new(k, DMatrix::from_row_slice(n, k * k, &flat)).unwrap()
    }

    fn random_coeffs(n: usize, k: usize, seed: u64) -> CoefficientMatrix {
        let mut s = seed;
        let data = DMatrix::from_fn(n, k * k, |_, _| {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (s >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        });
        CoefficientMatrix::new(k, data).unwrap()
    }

    #[test]
    fn antipodal_pair_is_rank_one() {
        // rows c and -c: mean 0, M = c cᵀ, λ_1 = ‖c‖², b_1 = c/‖c‖ (sign rule)
        let c = [1.0, -2.0, 0.5, 0.0, 3.0, 1.0, -1.0, 0.0, 2.0];
        let neg: Vec<f64> = c.iter().map(|x| -x).collect();
        let model = fit_fpca(&coeffs(3, &[&c, &neg]), 1).unwrap();
        let norm_sq: f64 = c.iter().map(|x| x * x).sum();
        assert!((model.eigenvalues[0] - norm_sq).abs() < 1e-10);
        let b = model.eigenvectors.column(0);
        for (i, ci) in c.iter().enumerate() {
            assert!((b[i] - ci / norm_sq.sqrt()).abs() < 1e-12);
        }
    }

    #[test]
    fn identical_rows_have_zero_spectrum() {
        let r = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9];
        let model = fit_fpca(&coeffs(3, &[&r, &r, &r, &r]), 3).unwrap();
        assert!(model.eigenvalues.iter().all(|&v| v.abs() <= 1e-10));
        assert_eq!(model.total_variance, 0.0);
    }

    #[test]
    fn too_many_components_is_rank_deficient() {
        let c = random_coeffs(4, 3, 1);
        assert!(matches!(fit_fpca(&c, 4), Err(Error::RankDeficient(_))));
        assert!(matches!(fit_fpca(&c, 0), Err(Error::RankDeficient(_))));
        assert!(fit_fpca(&c, 3).is_ok());
    }

    #[test]
    fn full_rank_transform_re_expands_exactly() {
        let c = random_coeffs(6, 3, 9);
        let model = fit_fpca(&c, 5).unwrap();
        let xi = transform(&model, &c).unwrap();
        let centered = center(c.matrix(), &model.mean_coeffs);
        let back = &xi * model.eigenvectors.transpose();
        assert!((centered - back).norm() <= 1e-8);
    }

    #[test]
    fn eigenvector_input_scores_unit() {
        let c = random_coeffs(8, 3, 4);
        let model = fit_fpca(&c, 3).unwrap();
        let row: Vec<f64> = (0..9)
            .map(|i| model.mean_coeffs[i] + model.eigenvectors[(i, 0)])
            .collect();
        let probe = CoefficientMatrix::new(3, DMatrix::from_row_slice(1, 9, &row)).unwrap();
        let xi = transform(&model, &probe).unwrap();
        assert!((xi[(0, 0)] - 1.0).abs() < 1e-12);
        assert!(xi[(0, 1)].abs() < 1e-12 && xi[(0, 2)].abs() < 1e-12);
    }

    #[test]
    fn reconstruction_endpoints() {
        let c = random_coeffs(7, 3, 2);
        let model = fit_fpca(&c, 6).unwrap();
        let xi = transform(&model, &c).unwrap();
        let scores: Vec<f64> = xi.row(2).iter().copied().collect();
        assert_eq!(reconstruct(&model, &scores, 0).unwrap(), model.mean_coeffs);
        let full = reconstruct(&model, &scores, 6).unwrap();
        assert!((full - c.row(2)).amax() <= 1e-8);
        assert!(reconstruct(&model, &scores, 7).is_err());
    }

    #[test]
    fn reconstruction_error_is_monotone() {
        let c = random_coeffs(9, 3, 21);
        let model = fit_fpca(&c, 8).unwrap();
        let xi = transform(&model, &c).unwrap();
        for i in 0..9 {
            let scores: Vec<f64> = xi.row(i).iter().copied().collect();
            let errs: Vec<f64> = (0..=8)
                .map(|j| (reconstruct(&model, &scores, j).unwrap() - c.row(i)).norm())
                .collect();
            assert!(errs.windows(2).all(|w| w[1] <= w[0] + 1e-12), "{errs:?}");
        }
    }

    #[test]
    fn eigen_residual_and_trace() {
        let c = random_coeffs(10, 3, 77);
        let model = fit_fpca(&c, 9).unwrap();
        let cc = center(c.matrix(), &model.mean_coeffs);
        let m = cc.transpose() * &cc / 10.0;
        for j in 0..9 {
            let b = model.eigenvectors.column(j);
            let r = &m * b - b * model.eigenvalues[j];
            assert!(r.norm() <= 1e-8 * model.eigenvalues[0].max(1.0));
        }
        let gram = model.eigenvectors.transpose() * &model.eigenvectors;
        assert!(linalg::max_abs(&(gram - DMatrix::identity(9, 9))) <= 1e-10);
        let sum: f64 = model.eigenvalues.iter().sum();
        assert!((sum - model.total_variance).abs() <= 1e-8);
        assert!((m.trace() - model.total_variance).abs() <= 1e-8);
    }

    #[test]
    fn scores_are_centered_with_decreasing_moments() {
        let c = random_coeffs(12, 3, 8);
        let model = fit_fpca(&c, 5).unwrap();
        let xi = transform(&model, &c).unwrap();
        let moments: Vec<f64> = (0..5)
            .map(|j| {
                assert!(xi.column(j).mean().abs() < 1e-8);
                xi.column(j).norm_squared() / 12.0
            })
            .collect();
        for (j, w) in moments.windows(2).enumerate() {
            assert!(w[1] <= w[0] + 1e-6, "component {j}");
        }
        for (m, ev) in moments.iter().zip(&model.eigenvalues) {
            assert!((m - ev).abs() < 1e-10);
        }
    }

    #[test]
    fn transform_is_affine() {
        let c = random_coeffs(6, 3, 31);
        let d = random_coeffs(6, 3, 32);
        let model = fit_fpca(&c, 4).unwrap();
        let alpha = 0.3;
        let mix = CoefficientMatrix::new(3, c.matrix() * alpha + d.matrix() * (1.0 - alpha)).unwrap();
        let lhs = transform(&model, &mix).unwrap();
        let rhs = transform(&model, &c).unwrap() * alpha + transform(&model, &d).unwrap() * (1.0 - alpha);
        assert!((lhs - rhs).amax() < 1e-12);
    }

    #[test]
    fn json_round_trip() {
        let model = fit_fpca(&random_coeffs(5, 3, 3), 4).unwrap();
        let back = FpcaModel::from_json(&model.to_json()).unwrap();
        assert_eq!(back, model);
    }

    #[test]
    fn variance_table_sums_to_one_at_full_rank() {
        let model = fit_fpca(&random_coeffs(12, 3, 5), 9).unwrap();
        let rows = variance_explained(&model);
        assert!((rows.last().unwrap().cumulative - 1.0).abs() < 1e-10);
    }
}
