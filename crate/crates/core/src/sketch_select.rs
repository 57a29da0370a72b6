//! Randomized feature selection for k-means.
//!
//! Given `A` (samples × features), a cluster count `k` and an accuracy
//! parameter `ε`, pick `r = k + ⌈k/ε⌉ + 1` columns:
//!
//! 1. sketch the row space with `Y = A R`, `R` an `n × r` Gaussian matrix;
//! 2. orthonormalize `Y` into `Q`;
//! 3. take `Z`, the top-`k` right singular vectors of `QᵀA`;
//! 4. sample column `i` with probability `P_i = ‖Z_(i)‖² / ‖Z‖_F²`, with
//!    replacement, `r` times;
//! 5. return `C = A Ω S`, each sampled column rescaled by `1/√(r P_i)`.
//!
//! [`bound_diagnostics`] evaluates the quantities that control the quality
//! of the resulting clustering (residual `E = A − AZZᵀ`, `σ_k(ZᵀΩS)`, and
//! the empirical approximation ratio against the exact optimum).

use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::clustering::{self, exact_optimum, objective_frobenius, ClusterAssignment, KmeansConfig};
use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::linalg;
use crate::par::{self, Execution};
use crate::rng::{self, Stream};

/// Relative threshold below which sketch columns and singular values count
/// as numerically zero.
const RANK_TOL: f64 = 1e-12;

/// `r = k + ⌈k/ε⌉ + 1`.
pub fn sample_size(k: usize, epsilon: f64) -> Result<usize> {
    if k == 0 {
        return Err(Error::InvalidArg("k must be >= 1".into()));
    }
    if !(epsilon > 0.0 && epsilon <= 1.0) {
        return Err(Error::InvalidArg(format!("epsilon must lie in (0, 1], got {epsilon}")));
    }
    let q = k as f64 / epsilon;
    // k/ε is often an integer that floating point lands just above (2/(1/3))
    let nearest = q.round();
    let ceil = if (q - nearest).abs() <= 1e-9 * q.max(1.0) {
        nearest
    } else {
        q.ceil()
    };
    Ok(k + ceil as usize + 1)
}

/// Approximate top-`k` right singular vectors of `a` (n × k, orthonormal
/// columns, each sign-normalized) from a Gaussian range sketch of width
/// `sketch_width`.
pub fn approx_top_right_singular_vectors(
    a: &FeatureMatrix,
    k: usize,
    sketch_width: usize,
    seed: u64,
) -> Result<DMatrix<f64>> {
    let (m, n) = (a.nrows(), a.ncols());
    if k == 0 || k > m.min(n) {
        return Err(Error::InvalidArg(format!("need 1 <= k <= min(m, n) = {}, got {k}", m.min(n))));
    }
    if sketch_width < k {
        return Err(Error::InvalidArg(format!("sketch width {sketch_width} is below k = {k}")));
    }
    let mut g = rng::stream(seed, Stream::Sketch);
    // column-major fill: column t is drawn before column t + 1
    let mut gaussian = DMatrix::zeros(n, sketch_width);
    for t in 0..sketch_width {
        for i in 0..n {
            gaussian[(i, t)] = rng::standard_normal(&mut g);
        }
    }
    let y = a.matrix() * gaussian;
    let q = linalg::orthonormal_columns(&y, RANK_TOL);
    if q.ncols() < k {
        return Err(Error::RankTooLow(format!(
            "sketch spans {} directions, need k = {k}",
            q.ncols()
        )));
    }
    let projected = q.transpose() * a.matrix();
    let dec = linalg::svd(&projected)?;
    let s = &dec.singular_values;
    let cutoff = RANK_TOL * s[0];
    let rank = s.iter().filter(|&&v| v > cutoff).count();
    if rank < k {
        return Err(Error::RankTooLow(format!("numerical rank {rank} is below k = {k}")));
    }
    let mut z = dec.v.columns(0, k).into_owned();
    linalg::normalize_column_signs(&mut z);
    Ok(z)
}

/// Leverage-score sampling distribution `P_i = ‖Z_(i)‖² / ‖Z‖_F²`.
pub fn leverage_probabilities(z: &DMatrix<f64>) -> Result<Vec<f64>> {
    if z.iter().any(|x| !x.is_finite()) {
        return Err(Error::DegenerateInput("Z has non-finite entries".into()));
    }
    let row_norms: Vec<f64> = z.row_iter().map(|r| r.norm_squared()).collect();
    let total: f64 = row_norms.iter().sum();
    if total <= 0.0 {
        return Err(Error::DegenerateInput("Z is the zero matrix".into()));
    }
    Ok(row_norms.into_iter().map(|v| v / total).collect())
}

/// Column draws with replacement and their rescaling factors.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledColumns {
    /// 0-based column indices, duplicates kept.
    pub indices: Vec<usize>,
    /// `1/√(r P_i)` per draw.
    pub scale: Vec<f64>,
}

/// `r` i.i.d. categorical draws by inverse CDF; draw `t` consumes exactly
/// the `t`-th uniform of the sampling stream.
pub fn sample_features(p: &[f64], r: usize, seed: u64) -> Result<SampledColumns> {
    if r == 0 {
        return Err(Error::InvalidArg("r must be >= 1".into()));
    }
    if p.is_empty() || p.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
        return Err(Error::InvalidArg("probabilities must be finite and non-negative".into()));
    }
    let total: f64 = p.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArg(format!("probabilities sum to {total}, not 1")));
    }
    let last = p.iter().rposition(|&v| v > 0.0).expect("positive mass");
    let mut cdf = Vec::with_capacity(p.len());
    let mut acc = 0.0;
    for &v in p {
        acc += v;
        cdf.push(acc);
    }
    cdf[last] = 1.0;

    let mut g = rng::stream(seed, Stream::Sampling);
    let mut indices = Vec::with_capacity(r);
    let mut scale = Vec::with_capacity(r);
    for _ in 0..r {
        let u = rng::uniform(&mut g);
        let i = cdf.partition_point(|&c| c <= u).min(last);
        indices.push(i);
        scale.push(1.0 / (r as f64 * p[i]).sqrt());
    }
    Ok(SampledColumns { indices, scale })
}

/// Everything needed to replay a selection.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionPlan {
    pub k: usize,
    pub epsilon: f64,
    pub r: usize,
    pub seed: u64,
    pub probabilities: Vec<f64>,
    /// 0-based in memory, written 1-based.
    pub sampled_indices: Vec<usize>,
    pub scale: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct PlanFile {
    k: usize,
    epsilon: f64,
    r: usize,
    seed: u64,
    probabilities: Vec<f64>,
    sampled_indices: Vec<usize>,
    scale: Vec<f64>,
}

impl SelectionPlan {
    pub fn to_json(&self) -> String {
        let f = PlanFile {
            k: self.k,
            epsilon: self.epsilon,
            r: self.r,
            seed: self.seed,
            probabilities: self.probabilities.clone(),
            sampled_indices: self.sampled_indices.iter().map(|i| i + 1).collect(),
            scale: self.scale.clone(),
        };
        serde_json::to_string_pretty(&f).expect("plan serializes")
    }

    pub fn from_json(text: &str) -> std::result::Result<Self, String> {
        let f: PlanFile = serde_json::from_str(text).map_err(|e| e.to_string())?;
        if f.sampled_indices.len() != f.r || f.scale.len() != f.r {
            return Err("plan arrays do not match r".into());
        }
        if f.sampled_indices.iter().any(|&i| i == 0 || i > f.probabilities.len()) {
            return Err("sampled index outside 1..=n".into());
        }
        Ok(Self {
            k: f.k,
            epsilon: f.epsilon,
            r: f.r,
            seed: f.seed,
            probabilities: f.probabilities,
            sampled_indices: f.sampled_indices.iter().map(|i| i - 1).collect(),
            scale: f.scale,
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

/// `C = A Ω S`: the sampled columns of `a`, rescaled, carrying their
/// original names.
pub fn reduce(a: &FeatureMatrix, plan: &SelectionPlan) -> Result<FeatureMatrix> {
    if plan.probabilities.len() != a.ncols() {
        return Err(Error::ShapeMismatch(format!(
            "plan covers {} features, matrix has {}",
            plan.probabilities.len(),
            a.ncols()
        )));
    }
    let am = a.matrix();
    let c = DMatrix::from_fn(a.nrows(), plan.r, |i, t| am[(i, plan.sampled_indices[t])] * plan.scale[t]);
    let names = plan.sampled_indices.iter().map(|&j| a.name(j)).collect();
    FeatureMatrix::new(c)?.with_names(names)
}

/// Output of [`select`].
#[derive(Debug, Clone)]
pub struct Selection {
    pub plan: SelectionPlan,
    pub reduced: FeatureMatrix,
    /// Approximate top-k right singular vectors used for the probabilities.
    pub z: DMatrix<f64>,
}

pub fn select(a: &FeatureMatrix, k: usize, epsilon: f64, seed: u64) -> Result<Selection> {
    let r = sample_size(k, epsilon)?;
    let z = approx_top_right_singular_vectors(a, k, r, seed)?;
    let probabilities = leverage_probabilities(&z)?;
    let drawn = sample_features(&probabilities, r, seed)?;
    let plan = SelectionPlan {
        k,
        epsilon,
        r,
        seed,
        probabilities,
        sampled_indices: drawn.indices,
        scale: drawn.scale,
    };
    let reduced = reduce(a, &plan)?;
    Ok(Selection { plan, reduced, z })
}

/// Run [`select`] once per seed.
pub fn select_sweep(
    a: &FeatureMatrix,
    k: usize,
    epsilon: f64,
    seeds: &[u64],
    exec: Execution,
) -> Result<Vec<Selection>> {
    par::try_map_indexed(seeds.len(), exec, |i| select(a, k, epsilon, seeds[i]))
}

/// `ZᵀΩS` (k × r): row `i_t` of `Z` scaled by `S(t,t)`, as column `t`.
pub fn sketched_basis(z: &DMatrix<f64>, plan: &SelectionPlan) -> DMatrix<f64> {
    DMatrix::from_fn(z.ncols(), plan.r, |c, t| z[(plan.sampled_indices[t], c)] * plan.scale[t])
}

/// How the reference optimum is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum OptimumMode {
    /// Enumerate every k-partition (at most 12 samples).
    Exact,
    /// Best of 200 seeded Lloyd restarts; an upper estimate of the optimum.
    Estimate,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SelectionDiagnostics {
    pub gamma_hat: f64,
    pub f_opt: f64,
    pub f_selected: f64,
    pub residual_norm: f64,
    pub sigma_k_zos: f64,
    pub optimum_mode: OptimumMode,
}

const ZERO_OBJECTIVE: f64 = 1e-9;
const ESTIMATE_RESTARTS: usize = 200;

pub fn bound_diagnostics(
    a: &FeatureMatrix,
    plan: &SelectionPlan,
    z: &DMatrix<f64>,
    labels_selected: &ClusterAssignment,
    mode: OptimumMode,
) -> Result<SelectionDiagnostics> {
    let k = labels_selected.k;
    if z.nrows() != a.ncols() {
        return Err(Error::ShapeMismatch(format!(
            "Z has {} rows, A has {} features",
            z.nrows(),
            a.ncols()
        )));
    }
    let on_full = ClusterAssignment::from_labels(a, labels_selected.labels.clone(), k)?;
    let f_selected = objective_frobenius(a, &on_full)?;
    let f_opt = match mode {
        OptimumMode::Exact => exact_optimum(a.matrix(), k)?.0,
        OptimumMode::Estimate => {
            let cfg = KmeansConfig::new(k, plan.seed).with_restarts(ESTIMATE_RESTARTS);
            clustering::kmeans(a, &cfg)?.assignment.objective
        }
    };
    let gamma_hat = if f_opt <= ZERO_OBJECTIVE {
        if f_selected <= ZERO_OBJECTIVE {
            1.0
        } else {
            return Err(Error::DegenerateOptimum(format!(
                "optimal objective is 0 but the selected-feature partition scores {f_selected:e}"
            )));
        }
    } else {
        f_selected / f_opt
    };

    let am = a.matrix();
    let residual = am - am * z * z.transpose();
    let zos = sketched_basis(z, plan);
    let sv = linalg::svd(&zos)?.singular_values;
    let sigma_k_zos = if sv.len() >= k { sv[k - 1] } else { 0.0 };

    Ok(SelectionDiagnostics {
        gamma_hat,
        f_opt,
        f_selected,
        residual_norm: residual.norm(),
        sigma_k_zos,
        optimum_mode: mode,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lcg_matrix(m: usize, n: usize, seed: u64) -> DMatrix<f64> {
        let mut s = seed;
        DMatrix::from_fn(m, n, |_, _| {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (s >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        })
    }

    #[test]
    fn sample_size_formula() {
        assert_eq!(sample_size(2, 1.0 / 3.0).unwrap(), 9);
        assert_eq!(sample_size(3, 0.5).unwrap(), 10);
        assert_eq!(sample_size(1, 1.0).unwrap(), 3);
        assert_eq!(sample_size(2, 0.3).unwrap(), 2 + 7 + 1);
        assert!(sample_size(2, 0.0).is_err());
        assert!(sample_size(2, 1.5).is_err());
    }

    #[test]
    fn leverage_examples() {
        let z = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
        assert_eq!(leverage_probabilities(&z).unwrap(), vec![0.5, 0.5, 0.0]);
        let same = DMatrix::from_fn(5, 2, |_, c| if c == 0 { 0.3 } else { -0.7 });
        for p in leverage_probabilities(&same).unwrap() {
            assert!((p - 0.2).abs() < 1e-15);
        }
        assert!(matches!(
            leverage_probabilities(&DMatrix::zeros(3, 2)),
            Err(Error::DegenerateInput(_))
        ));
    }

    #[test]
    fn point_mass_sampling() {
        let s = sample_features(&[1.0, 0.0, 0.0], 3, 9).unwrap();
        assert_eq!(s.indices, vec![0, 0, 0]);
        for v in s.scale {
            assert!((v - 1.0 / 3f64.sqrt()).abs() < 1e-15);
        }
        // trailing zero mass is never drawn
        let s = sample_features(&[0.0, 1.0, 0.0], 50, 1).unwrap();
        assert!(s.indices.iter().all(|&i| i == 1));
    }

    #[test]
    fn even_split_has_unit_scale() {
        for seed in 0..10 {
            let s = sample_features(&[0.5, 0.5], 2, seed).unwrap();
            assert!(s.scale.iter().all(|&v| (v - 1.0).abs() < 1e-15));
        }
        assert!(sample_features(&[0.5, 0.5], 0, 0).is_err());
        assert!(sample_features(&[0.5, 0.6], 2, 0).is_err());
    }

    #[test]
    fn single_nonzero_column_is_always_drawn() {
        let mut a = DMatrix::zeros(6, 5);
        for i in 0..6 {
            a[(i, 3)] = i as f64 - 2.0;
        }
        let fm = FeatureMatrix::new(a.clone()).unwrap();
        let sel = select(&fm, 1, 1.0, 4).unwrap();
        assert_eq!(sel.plan.r, 3);
        assert!(sel.plan.sampled_indices.iter().all(|&i| i == 3));
        for t in 0..3 {
            for i in 0..6 {
                let expected = a[(i, 3)] / 3f64.sqrt();
                assert!((sel.reduced.matrix()[(i, t)] - expected).abs() < 1e-12);
            }
        }
        assert_eq!(sel.reduced.names().unwrap(), &["f4", "f4", "f4"]);
    }

    #[test]
    fn rank_deficiency_is_detected() {
        // rank 1 with k = 2
        let u = lcg_matrix(8, 1, 3);
        let v = lcg_matrix(1, 12, 4);
        let a = FeatureMatrix::new(u * v).unwrap();
        assert!(matches!(
            approx_top_right_singular_vectors(&a, 2, 9, 0),
            Err(Error::RankTooLow(_))
        ));
        assert!(matches!(
            approx_top_right_singular_vectors(&a, 0, 9, 0),
            Err(Error::InvalidArg(_))
        ));
    }

    #[test]
    fn z_is_orthonormal_and_residual_is_orthogonal() {
        let a = FeatureMatrix::new(lcg_matrix(15, 30, 8)).unwrap();
        let z = approx_top_right_singular_vectors(&a, 3, 13, 2).unwrap();
        let gram = z.transpose() * &z;
        assert!(linalg::max_abs(&(gram - DMatrix::identity(3, 3))) <= 1e-10);
        let am = a.matrix();
        let proj = am * &z * z.transpose();
        let e = am - &proj;
        let bound = 1e-8 * a.frobenius_sq();
        assert!(linalg::max_abs(&(&proj * e.transpose())) <= bound);
        assert!(linalg::max_abs(&(z.transpose() * e.transpose())) <= bound);
    }

    #[test]
    fn selection_is_deterministic() {
        let a = FeatureMatrix::new(lcg_matrix(10, 20, 1)).unwrap();
        let x = select(&a, 2, 0.5, 77).unwrap();
        let y = select(&a, 2, 0.5, 77).unwrap();
        assert_eq!(x.plan, y.plan);
        assert_eq!(x.plan.to_json(), y.plan.to_json());
        let total: f64 = x.plan.probabilities.iter().sum();
        assert!((total - 1.0).abs() <= 1e-12);
        for (t, &i) in x.plan.sampled_indices.iter().enumerate() {
            assert!(x.plan.probabilities[i] > 0.0);
            let unit = x.plan.scale[t] * (x.plan.r as f64 * x.plan.probabilities[i]).sqrt();
            assert!((unit - 1.0).abs() <= 1e-12);
        }
        assert_eq!(reduce(&a, &x.plan).unwrap(), x.reduced);
    }

    #[test]
    fn plan_json_round_trip_is_one_based() {
        let a = FeatureMatrix::new(lcg_matrix(10, 20, 2)).unwrap();
        let sel = select(&a, 2, 1.0, 5).unwrap();
        let json = sel.plan.to_json();
        let back = SelectionPlan::from_json(&json).unwrap();
        assert_eq!(back, sel.plan);
        let raw: serde_json::Value = serde_json::from_str(&json).unwrap();
        let first = raw["sampled_indices"][0].as_u64().unwrap() as usize;
        assert_eq!(first, sel.plan.sampled_indices[0] + 1);
    }

    #[test]
    fn exact_blobs_give_unit_gamma() {
        let rows: Vec<Vec<f64>> = (0..8)
            .map(|i| if i < 4 { vec![1.0, 2.0, 0.0, 5.0] } else { vec![-3.0, 0.0, 4.0, 1.0] })
            .collect();
        let a = FeatureMatrix::from_rows(&rows).unwrap();
        let sel = select(&a, 2, 1.0, 3).unwrap();
        let asg = clustering::kmeans(&sel.reduced, &KmeansConfig::new(2, 3)).unwrap().assignment;
        let d = bound_diagnostics(&a, &sel.plan, &sel.z, &asg, OptimumMode::Exact).unwrap();
        assert!(d.f_opt.abs() < 1e-12);
        assert!(d.f_selected.abs() < 1e-9);
        assert_eq!(d.gamma_hat, 1.0);
    }

    #[test]
    fn degenerate_optimum_is_reported() {
        let rows: Vec<Vec<f64>> = (0..6)
            .map(|i| if i < 3 { vec![0.0, 0.0, 1.0] } else { vec![5.0, 5.0, 1.0] })
            .collect();
        let a = FeatureMatrix::from_rows(&rows).unwrap();
        let sel = select(&a, 2, 1.0, 3).unwrap();
        let bad = ClusterAssignment::from_labels(&a, vec![0, 1, 0, 1, 0, 1], 2).unwrap();
        assert!(matches!(
            bound_diagnostics(&a, &sel.plan, &sel.z, &bad, OptimumMode::Exact),
            Err(Error::DegenerateOptimum(_))
        ));
    }

    #[test]
    fn exact_mode_refuses_large_instances() {
        let a = FeatureMatrix::new(lcg_matrix(13, 6, 5)).unwrap();
        let sel = select(&a, 2, 1.0, 1).unwrap();
        let asg = clustering::kmeans(&sel.reduced, &KmeansConfig::new(2, 1)).unwrap().assignment;
        assert!(matches!(
            bound_diagnostics(&a, &sel.plan, &sel.z, &asg, OptimumMode::Exact),
            Err(Error::TooLarge(_))
        ));
        let d = bound_diagnostics(&a, &sel.plan, &sel.z, &asg, OptimumMode::Estimate).unwrap();
        assert!(d.f_selected >= d.f_opt - 1e-9);
    }
}
