//! Reference implementations written independently of the library, used as
//! oracles by the integration and acceptance tests.
#![allow(dead_code)]

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> StdRng {
    StdRng::seed_from_u64(seed)
}

pub fn gaussian(rng: &mut StdRng) -> f64 {
    rng.sample(StandardNormal)
}

/// Row-major `m × n` matrix of standard normals.
pub fn gaussian_rows(rng: &mut StdRng, m: usize, n: usize) -> Vec<Vec<f64>> {
    (0..m).map(|_| (0..n).map(|_| gaussian(rng)).collect()).collect()
}

/// Cyclic Jacobi eigensolver for a symmetric matrix. Returns eigenvalues in
/// descending order with eigenvectors as the columns of the second value
/// (`vecs[row][col]`).
pub fn jacobi_eigen(a: &[Vec<f64>]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = a.len();
    let mut m: Vec<Vec<f64>> = a.to_vec();
    let mut v: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| f64::from(u8::from(i == j))).collect()).collect();
    let scale: f64 = m.iter().flatten().map(|x| x * x).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[i][j] * m[i][j])
            .sum::<f64>()
            .sqrt();
        if off <= 1e-15 * scale {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                if m[p][q].abs() <= 1e-300 {
                    continue;
                }
                let theta = (m[q][q] - m[p][p]) / (2.0 * m[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[k][p];
                    let mkq = m[k][q];
                    m[k][p] = c * mkp - s * mkq;
                    m[k][q] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[p][k];
                    let mqk = m[q][k];
                    m[p][k] = c * mpk - s * mqk;
                    m[q][k] = s * mpk + c * mqk;
                }
                for row in v.iter_mut() {
                    let vp = row[p];
                    let vq = row[q];
                    row[p] = c * vp - s * vq;
                    row[q] = s * vp + c * vq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[j][j].total_cmp(&m[i][i]));
    let values = order.iter().map(|&i| m[i][i]).collect();
    let vecs = (0..n).map(|r| order.iter().map(|&c| v[r][c]).collect()).collect();
    (values, vecs)
}

/// Flip `column` so its largest-magnitude entry (first on ties) is positive.
pub fn sign_normalize(column: &mut [f64]) {
    let mut best = 0;
    for i in 1..column.len() {
        if column[i].abs() > column[best].abs() {
            best = i;
        }
    }
    if column[best] < 0.0 {
        column.iter_mut().for_each(|x| *x = -*x);
    }
}

/// Within-cluster sum of squares through pairwise distances:
/// `Σ_C (1/2|C|) Σ_{i,j∈C} ‖a_i − a_j‖²`.
pub fn pairwise_cost(rows: &[Vec<f64>], members: &[usize]) -> f64 {
    if members.is_empty() {
        return 0.0;
    }
    let mut s = 0.0;
    for &i in members {
        for &j in members {
            s += rows[i].iter().zip(&rows[j]).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();
        }
    }
    s / (2.0 * members.len() as f64)
}

/// Optimal 2-means cost by enumerating every bitmask split.
pub fn brute_force_two_means(rows: &[Vec<f64>]) -> f64 {
    let m = rows.len();
    let mut best = f64::INFINITY;
    // the last point always sits in cluster 0, removing mirror images
    for mask in 1u32..(1 << (m - 1)) {
        let (a, b): (Vec<usize>, Vec<usize>) = (0..m).partition(|&i| mask >> i & 1 == 1);
        best = best.min(pairwise_cost(rows, &a) + pairwise_cost(rows, &b));
    }
    best
}

/// `‖A − X Xᵀ A‖_F²` with the normalized indicator built here.
pub fn frobenius_objective(rows: &[Vec<f64>], labels: &[usize], k: usize) -> f64 {
    let m = rows.len();
    let n = rows[0].len();
    let mut sizes = vec![0usize; k];
    for &l in labels {
        sizes[l] += 1;
    }
    // X Xᵀ has entry 1/s when i and j share a cluster of size s
    let mut total = 0.0;
    for i in 0..m {
        for c in 0..n {
            let proj: f64 = (0..m)
                .filter(|&j| labels[j] == labels[i])
                .map(|j| rows[j][c] / sizes[labels[i]] as f64)
                .sum();
            let d = rows[i][c] - proj;
            total += d * d;
        }
    }
    total
}

/// 1-based Fourier basis: `1`, then `√2 sin(2πju)`, `√2 cos(2πju)` pairs.
pub fn fourier(index0: usize, u: f64) -> f64 {
    let i = index0 + 1;
    if i == 1 {
        1.0
    } else if i % 2 == 0 {
        2f64.sqrt() * (2.0 * std::f64::consts::PI * (i / 2) as f64 * u).sin()
    } else {
        2f64.sqrt() * (2.0 * std::f64::consts::PI * ((i - 1) / 2) as f64 * u).cos()
    }
}

/// Whether integer counts exist that round to the published rates and give
/// an accuracy within `slack` of the published one.
pub fn integer_counts_exist(acc: f64, sens: f64, spec: f64, n_pos: usize, n_neg: usize, slack: f64) -> bool {
    let decimals = |x: f64| {
        let s = format!("{x}");
        s.split('.').nth(1).map_or(0, str::len) as i32
    };
    let rounds_to = |num: usize, den: usize, target: f64| {
        let d = decimals(target).max(2);
        let p = 10f64.powi(d);
        ((num as f64 / den as f64) * p).round() / p == (target * p).round() / p
    };
    let n = (n_pos + n_neg) as f64;
    (0..=n_pos).filter(|&tp| rounds_to(tp, n_pos, sens)).any(|tp| {
        (0..=n_neg)
            .filter(|&tn| rounds_to(tn, n_neg, spec))
            .any(|tn| ((tp + tn) as f64 / n - acc).abs() <= slack)
    })
}
