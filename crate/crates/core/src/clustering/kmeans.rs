use nalgebra::DMatrix;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{centroids, objective_sumsq, squared_distance_to, ClusterAssignment};
use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::par::{self, Execution};
use crate::rng::{self, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KmeansConfig {
    pub k: usize,
    pub restarts: usize,
    pub max_iters: usize,
    /// Stop once the relative objective improvement falls below this.
    pub tol: f64,
    pub seed: u64,
}

impl KmeansConfig {
    pub fn new(k: usize, seed: u64) -> Self {
        Self {
            k,
            restarts: 20,
            max_iters: 300,
            tol: 1e-9,
            seed,
        }
    }

    pub fn with_restarts(mut self, restarts: usize) -> Self {
        self.restarts = restarts;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::InvalidConfig("k-means needs k >= 1".into()));
        }
        if self.restarts == 0 {
            return Err(Error::InvalidConfig("k-means needs restarts >= 1".into()));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidConfig("k-means needs max_iters >= 1".into()));
        }
        if !(self.tol >= 0.0) {
            return Err(Error::InvalidConfig(format!("k-means tol must be >= 0, got {}", self.tol)));
        }
        Ok(())
    }
}

/// What happened in one restart.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RestartReport {
    pub restart: usize,
    pub iterations: usize,
    pub converged: bool,
    pub objective: f64,
    /// Objective after seeding and after every Lloyd iteration.
    pub objective_trace: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct KmeansResult {
    pub assignment: ClusterAssignment,
    pub best_restart: usize,
    pub restarts: Vec<RestartReport>,
}

pub fn kmeans(a: &FeatureMatrix, config: &KmeansConfig) -> Result<KmeansResult> {
    kmeans_with(a, config, Execution::default())
}

/// Best of `config.restarts` independent k-means++ / Lloyd runs. Restart
/// `r` draws from its own substream, and ties on the objective go to the
/// lowest restart index, so the result does not depend on `exec`.
pub fn kmeans_with(a: &FeatureMatrix, config: &KmeansConfig, exec: Execution) -> Result<KmeansResult> {
    config.validate()?;
    let m = a.nrows();
    if config.k > m {
        return Err(Error::InvalidArg(format!("k = {} exceeds the {m} samples", config.k)));
    }
    let runs = par::map_indexed(config.restarts, exec, |r| {
        let mut rng = rng::stream(config.seed, Stream::KmeansRestart(r as u32));
        lloyd(a.matrix(), config, r, &mut rng)
    });

    let mut best = 0;
    for (r, run) in runs.iter().enumerate() {
        if !run.1.objective.is_finite() {
            return Err(Error::NumericalFailure(format!("restart {r} produced a non-finite objective")));
        }
        if run.1.objective < runs[best].1.objective {
            best = r;
        }
    }
    let (labels, _) = &runs[best];
    let assignment = ClusterAssignment::from_labels(a, labels.clone(), config.k)?;
    Ok(KmeansResult {
        assignment,
        best_restart: best,
        restarts: runs.into_iter().map(|(_, rep)| rep).collect(),
    })
}

fn lloyd(a: &DMatrix<f64>, config: &KmeansConfig, restart: usize, rng: &mut ChaCha8Rng) -> (Vec<usize>, RestartReport) {
    let k = config.k;
    let mut centers = plus_plus_seeds(a, k, rng);
    let mut labels = assign(a, &centers);
    repair_empty(a, &centers, &mut labels, k);
    let mut objective = objective_sumsq(a, &labels, k);
    let mut trace = vec![objective];
    let mut iterations = 0;
    let mut converged = false;

    while iterations < config.max_iters {
        iterations += 1;
        centers = centroids(a, &labels, k);
        let mut next = assign(a, &centers);
        repair_empty(a, &centers, &mut next, k);
        let next_objective = objective_sumsq(a, &next, k);
        trace.push(next_objective);
        let unchanged = next == labels;
        let improvement = objective - next_objective;
        labels = next;
        objective = next_objective;
        if unchanged || improvement <= config.tol * (objective + improvement) {
            converged = true;
            break;
        }
    }

    let report = RestartReport {
        restart,
        iterations,
        converged,
        objective,
        objective_trace: trace,
    };
    (labels, report)
}

/// k-means++: first center uniform, then proportional to the squared
/// distance to the nearest chosen center.
fn plus_plus_seeds(a: &DMatrix<f64>, k: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let m = a.nrows();
    let mut centers = DMatrix::zeros(k, a.ncols());
    let first = ((rng::uniform(rng) * m as f64) as usize).min(m - 1);
    centers.row_mut(0).copy_from(&a.row(first));
    let mut nearest: Vec<f64> = (0..m).map(|i| squared_distance_to(a, i, &centers, 0)).collect();

    for c in 1..k {
        let total: f64 = nearest.iter().sum();
        let u = rng::uniform(rng);
        let pick = if total > 0.0 {
            let target = u * total;
            let mut acc = 0.0;
            let mut chosen = None;
            for (i, &d) in nearest.iter().enumerate() {
                acc += d;
                if d > 0.0 && target < acc {
                    chosen = Some(i);
                    break;
                }
            }
            // rounding can leave target == acc at the end
            chosen.unwrap_or_else(|| nearest.iter().rposition(|&d| d > 0.0).unwrap_or(0))
        } else {
            ((u * m as f64) as usize).min(m - 1)
        };
        centers.row_mut(c).copy_from(&a.row(pick));
        for (i, d) in nearest.iter_mut().enumerate() {
            *d = d.min(squared_distance_to(a, i, &centers, c));
        }
    }
    centers
}

/// Nearest center by squared distance, ties to the lowest index.
fn assign(a: &DMatrix<f64>, centers: &DMatrix<f64>) -> Vec<usize> {
    (0..a.nrows())
        .map(|i| {
            let mut best = 0;
            let mut best_d = squared_distance_to(a, i, centers, 0);
            for c in 1..centers.nrows() {
                let d = squared_distance_to(a, i, centers, c);
                if d < best_d {
                    best = c;
                    best_d = d;
                }
            }
            best
        })
        .collect()
}

/// Move the point farthest from its own center (taken from clusters with
/// more than one member) into each empty cluster.
fn repair_empty(a: &DMatrix<f64>, centers: &DMatrix<f64>, labels: &mut [usize], k: usize) {
    let mut sizes = vec![0usize; k];
    for &l in labels.iter() {
        sizes[l] += 1;
    }
    for empty in 0..k {
        if sizes[empty] > 0 {
            continue;
        }
        let mut donor: Option<(usize, f64)> = None;
        for (i, &l) in labels.iter().enumerate() {
            if sizes[l] < 2 {
                continue;
            }
            let d = squared_distance_to(a, i, centers, l);
            if donor.is_none_or(|(_, best)| d > best) {
                donor = Some((i, d));
            }
        }
        if let Some((i, _)) = donor {
            sizes[labels[i]] -= 1;
            labels[i] = empty;
            sizes[empty] = 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rows(v: &[[f64; 2]]) -> FeatureMatrix {
        FeatureMatrix::from_rows(&v.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn separates_exact_clusters() {
        let a = rows(&[[0.0, 0.0], [0.0, 0.0], [10.0, 10.0], [10.0, 10.0]]);
        let res = kmeans(&a, &KmeansConfig::new(2, 1)).unwrap();
        let l = &res.assignment.labels;
        assert_eq!(res.assignment.objective, 0.0);
        assert_eq!(l[0], l[1]);
        assert_eq!(l[2], l[3]);
        assert_ne!(l[0], l[2]);
    }

    #[test]
    fn single_cluster_is_total_sum_of_squares() {
        let a = rows(&[[1.0, 2.0], [3.0, -1.0], [0.0, 0.0], [4.0, 5.0], [-2.0, 1.0]]);
        let res = kmeans(&a, &KmeansConfig::new(1, 0)).unwrap();
        let mean = a.matrix().row_mean();
        let tss: f64 = a.matrix().row_iter().map(|r| (r - &mean).norm_squared()).sum();
        assert!((res.assignment.objective - tss).abs() < 1e-12);
    }

    #[test]
    fn all_points_identical_still_yields_nonempty_clusters() {
        let a = rows(&[[1.0, 1.0]; 5]);
        let res = kmeans(&a, &KmeansConfig::new(3, 4)).unwrap();
        assert!(res.assignment.cluster_sizes.iter().all(|&s| s >= 1));
        assert_eq!(res.assignment.objective, 0.0);
    }

    #[test]
    fn k_larger_than_m_rejected() {
        let a = rows(&[[0.0, 0.0], [1.0, 1.0]]);
        assert!(matches!(kmeans(&a, &KmeansConfig::new(3, 0)), Err(Error::InvalidArg(_))));
    }

    #[test]
    fn lloyd_objective_never_increases() {
        let mut s = 99u64;
        let mut next = move || {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (s >> 11) as f64 / (1u64 << 53) as f64
        };
        let a = FeatureMatrix::new(DMatrix::from_fn(60, 3, |_, _| next() * 10.0)).unwrap();
        let res = kmeans(&a, &KmeansConfig::new(5, 3)).unwrap();
        for rep in &res.restarts {
            for w in rep.objective_trace.windows(2) {
                assert!(w[1] <= w[0] * (1.0 + 1e-12), "restart {}: {:?}", rep.restart, rep.objective_trace);
            }
        }
    }

    #[test]
    fn restarts_are_schedule_independent() {
        let a = FeatureMatrix::new(DMatrix::from_fn(40, 4, |i, j| ((i * 7 + j * 13) % 11) as f64)).unwrap();
        let cfg = KmeansConfig::new(4, 12);
        let s = kmeans_with(&a, &cfg, Execution::Sequential).unwrap();
        let p = kmeans_with(&a, &cfg, Execution::Parallel).unwrap();
        assert_eq!(s.assignment, p.assignment);
        assert_eq!(s.best_restart, p.best_restart);
        assert_eq!(s.restarts, p.restarts);
    }
}
