use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Largest sample count accepted by [`exact_optimum`].
pub const EXACT_MAX_SAMPLES: usize = 12;

/// Minimum k-means objective over every partition of the rows of `a` into
/// exactly `k` non-empty clusters, with the first optimal labeling found in
/// restricted-growth order.
pub fn exact_optimum(a: &DMatrix<f64>, k: usize) -> Result<(f64, Vec<usize>)> {
    let m = a.nrows();
    if m > EXACT_MAX_SAMPLES {
        return Err(Error::TooLarge(format!(
            "exact enumeration supports at most {EXACT_MAX_SAMPLES} samples, got {m}"
        )));
    }
    if k == 0 || k > m {
        return Err(Error::InvalidArg(format!("need 1 <= k <= m, got k = {k}, m = {m}")));
    }
    let gram = a * a.transpose();
    let mut search = Search {
        gram: &gram,
        k,
        labels: vec![0; m],
        members: vec![Vec::new(); k],
        pair_sums: vec![0.0; k],
        best: f64::NEG_INFINITY,
        best_labels: Vec::new(),
    };
    search.place(0, 0);
    // rescore directly; trace minus the best score loses digits to cancellation
    let objective = super::objective_sumsq(a, &search.best_labels, k);
    Ok((objective, search.best_labels))
}

/// Depth-first enumeration maximizing Σ_c (1/s_c) Σ_{a,b∈c} ⟨a_a, a_b⟩,
/// which is the trace of AᵀA minus the k-means objective.
struct Search<'a> {
    gram: &'a DMatrix<f64>,
    k: usize,
    labels: Vec<usize>,
    members: Vec<Vec<usize>>,
    pair_sums: Vec<f64>,
    best: f64,
    best_labels: Vec<usize>,
}

impl Search<'_> {
    fn place(&mut self, i: usize, used: usize) {
        let m = self.labels.len();
        if i == m {
            if used == self.k {
                let score: f64 = self
                    .pair_sums
                    .iter()
                    .zip(&self.members)
                    .map(|(p, mem)| p / mem.len() as f64)
                    .sum();
                if score > self.best {
                    self.best = score;
                    self.best_labels = self.labels.clone();
                }
            }
            return;
        }
        if m - i < self.k - used {
            return;
        }
        let upper = if used < self.k { used + 1 } else { used };
        for c in 0..upper {
            let cross: f64 = self.members[c].iter().map(|&b| self.gram[(i, b)]).sum();
            let delta = 2.0 * cross + self.gram[(i, i)];
            self.pair_sums[c] += delta;
            self.members[c].push(i);
            self.labels[i] = c;
            self.place(i + 1, used.max(c + 1));
            self.members[c].pop();
            self.pair_sums[c] -= delta;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_exact_blobs() {
        let a = DMatrix::from_row_slice(4, 2, &[0.0, 0.0, 10.0, 10.0, 0.0, 0.0, 10.0, 10.0]);
        let (f, labels) = exact_optimum(&a, 2).unwrap();
        assert!(f.abs() < 1e-12);
        assert_eq!(labels, vec![0, 1, 0, 1]);
    }

    #[test]
    fn partition_count_matches_stirling() {
        // S(6, 2) = 31 and S(6, 3) = 90: count leaves via a zero matrix
        struct Count(usize);
        fn count(m: usize, k: usize, i: usize, used: usize, acc: &mut Count) {
            if i == m {
                if used == k {
                    acc.0 += 1;
                }
                return;
            }
            let upper = if used < k { used + 1 } else { used };
            for c in 0..upper {
                count(m, k, i + 1, used.max(c + 1), acc);
            }
        }
        let mut c = Count(0);
        count(6, 2, 0, 0, &mut c);
        assert_eq!(c.0, 31);
        let mut c = Count(0);
        count(6, 3, 0, 0, &mut c);
        assert_eq!(c.0, 90);
    }

    #[test]
    fn too_large() {
        let a = DMatrix::zeros(13, 2);
        assert!(matches!(exact_optimum(&a, 2), Err(Error::TooLarge(_))));
    }

    #[test]
    fn k_equals_m_is_zero() {
        let a = DMatrix::from_fn(5, 3, |i, j| (i * j) as f64 + 0.5 * i as f64);
        let (f, _) = exact_optimum(&a, 5).unwrap();
        assert!(f.abs() < 1e-9);
    }
}
