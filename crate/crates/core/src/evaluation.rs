//! Scoring clusterings against ground truth.
//!
//! Clusters are matched to groups by the injective map that maximizes the
//! number of correctly placed samples; accuracy, sensitivity and specificity
//! are read off the aligned confusion table.

use std::fmt::Write as _;

use serde::Serialize;

use crate::clustering::ClusterAssignment;
use crate::error::{Error, Result};

/// Exhaustive permutation search is used up to this many clusters/groups.
const EXHAUSTIVE_MAX: usize = 8;

/// Allowed gap between a reported accuracy and the prevalence-weighted mean
/// of sensitivity and specificity (three-decimal tables).
pub const CONSISTENCY_SLACK: f64 = 0.005;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvaluationReport {
    /// L × k counts, rows = true groups, columns = clusters as labeled.
    pub confusion: Vec<Vec<usize>>,
    /// L × max(L, k) counts with column `g` holding the cluster matched to
    /// group `g`; columns past `L` hold unmatched clusters, missing clusters
    /// are zero columns. Its trace is the number of correct samples.
    pub aligned_confusion: Vec<Vec<usize>>,
    /// `alignment[c]` = group matched to cluster `c`, or `None`.
    pub alignment: Vec<Option<usize>>,
    pub accuracy: f64,
    pub sensitivity: Option<f64>,
    pub specificity: Option<f64>,
    /// Recall of each true group.
    pub per_group_rates: Vec<f64>,
    pub n_samples: usize,
}

/// Match clusters to groups and compute the rates.
///
/// `truth` holds 0-based group indices; `positive_class` is 0-based too and
/// only allowed when there are exactly two groups.
pub fn align_and_score(
    truth: &[usize],
    assignment: &ClusterAssignment,
    positive_class: Option<usize>,
) -> Result<EvaluationReport> {
    align_labels(truth, &assignment.labels, assignment.k, positive_class)
}

/// [`align_and_score`] on bare 0-based cluster labels in `0..k`.
pub fn align_labels(
    truth: &[usize],
    labels: &[usize],
    k: usize,
    positive_class: Option<usize>,
) -> Result<EvaluationReport> {
    let m = truth.len();
    if m == 0 || labels.len() != m {
        return Err(Error::ShapeMismatch(format!(
            "{} true labels for {} assigned samples",
            m,
            labels.len()
        )));
    }
    let groups = truth.iter().max().map_or(0, |&g| g + 1);
    if let Some(p) = positive_class {
        if groups != 2 {
            return Err(Error::MissingPositiveClass(format!(
                "sensitivity needs exactly 2 groups, found {groups}"
            )));
        }
        if p >= 2 {
            return Err(Error::MissingPositiveClass(format!("positive class {} is not a group", p + 1)));
        }
    }

    let mut confusion = vec![vec![0usize; k]; groups];
    for (&g, &c) in truth.iter().zip(labels) {
        if c >= k {
            return Err(Error::ShapeMismatch(format!("cluster label {} exceeds k = {k}", c + 1)));
        }
        confusion[g][c] += 1;
    }

    let size = groups.max(k);
    // weight[c][g] = samples of group g in cluster c, zero-padded to square
    let weight: Vec<Vec<usize>> = (0..size)
        .map(|c| {
            (0..size)
                .map(|g| if c < k && g < groups { confusion[g][c] } else { 0 })
                .collect()
        })
        .collect();
    let perm = if size <= EXHAUSTIVE_MAX {
        best_permutation(&weight)
    } else {
        max_weight_matching(&weight)
    };

    let alignment: Vec<Option<usize>> = (0..k).map(|c| Some(perm[c]).filter(|&g| g < groups)).collect();
    let mut aligned = vec![vec![0usize; size]; groups];
    for (c, &g) in perm.iter().enumerate().take(k) {
        for (row, conf_row) in aligned.iter_mut().zip(&confusion) {
            row[g] = conf_row[c];
        }
    }
    let correct: usize = (0..groups).map(|g| aligned[g][g]).sum();
    let accuracy = correct as f64 / m as f64;
    let per_group_rates: Vec<f64> = (0..groups)
        .map(|g| {
            let total: usize = confusion[g].iter().sum();
            if total == 0 {
                0.0
            } else {
                aligned[g][g] as f64 / total as f64
            }
        })
        .collect();
    let (sensitivity, specificity) = match positive_class {
        Some(p) => (Some(per_group_rates[p]), Some(per_group_rates[1 - p])),
        None => (None, None),
    };

    Ok(EvaluationReport {
        confusion,
        aligned_confusion: aligned,
        alignment,
        accuracy,
        sensitivity,
        specificity,
        per_group_rates,
        n_samples: m,
    })
}

/// Lexicographically smallest permutation with maximal matched weight.
fn best_permutation(weight: &[Vec<usize>]) -> Vec<usize> {
    let n = weight.len();
    let mut perm: Vec<usize> = (0..n).collect();
    let mut best = perm.clone();
    let score = |p: &[usize]| -> usize { p.iter().enumerate().map(|(c, &g)| weight[c][g]).sum() };
    let mut best_score = score(&perm);
    while next_permutation(&mut perm) {
        let s = score(&perm);
        if s > best_score {
            best_score = s;
            best.copy_from_slice(&perm);
        }
    }
    best
}

fn next_permutation(p: &mut [usize]) -> bool {
    let n = p.len();
    if n < 2 {
        return false;
    }
    let mut i = n - 1;
    while i > 0 && p[i - 1] >= p[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = n - 1;
    while p[j] <= p[i - 1] {
        j -= 1;
    }
    p.swap(i - 1, j);
    p[i..].reverse();
    true
}

/// Hungarian algorithm (shortest augmenting paths) on `max − weight`.
/// Returns `perm[row] = column`.
fn max_weight_matching(weight: &[Vec<usize>]) -> Vec<usize> {
    let n = weight.len();
    let top = weight.iter().flatten().copied().max().unwrap_or(0) as i64;
    let cost = |i: usize, j: usize| top - weight[i][j] as i64;
    // 1-based potentials, p[j] = row matched to column j
    let mut u = vec![0i64; n + 1];
    let mut v = vec![0i64; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![i64::MAX; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = i64::MAX;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut perm = vec![0; n];
    for j in 1..=n {
        perm[p[j] - 1] = j - 1;
    }
    perm
}

/// Whether a reported accuracy equals the prevalence-weighted mean of its
/// sensitivity and specificity within [`CONSISTENCY_SLACK`].
pub fn rates_consistent(accuracy: f64, sensitivity: f64, specificity: f64, n_pos: usize, n_neg: usize) -> bool {
    let total = (n_pos + n_neg) as f64;
    if total == 0.0 {
        return false;
    }
    let weighted = (sensitivity * n_pos as f64 + specificity * n_neg as f64) / total;
    (accuracy - weighted).abs() <= CONSISTENCY_SLACK
}

/// [`rates_consistent`] applied to a binary report; false when the report
/// carries no sensitivity/specificity.
pub fn consistency_check(report: &EvaluationReport, n_pos: usize, n_neg: usize) -> bool {
    match (report.sensitivity, report.specificity) {
        (Some(sens), Some(spec)) => rates_consistent(report.accuracy, sens, spec, n_pos, n_neg),
        _ => false,
    }
}

impl EvaluationReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Assigned × true table with counts, each cell followed by its share of
    /// the true group (column %) and of the assigned cluster (row %).
    pub fn to_table(&self) -> String {
        let groups = self.confusion.len();
        let k = self.alignment.len();
        let group_totals: Vec<usize> = self.confusion.iter().map(|r| r.iter().sum()).collect();
        // clusters in aligned order: matched ones first, by group
        let mut order: Vec<usize> = (0..k).collect();
        order.sort_by_key(|&c| (self.alignment[c].unwrap_or(usize::MAX), c));
        let rows: Vec<(String, Vec<String>)> = order
            .iter()
            .map(|&c| {
                let label = match self.alignment[c] {
                    Some(g) => format!("Group {}", g + 1),
                    None => format!("Cluster {}", c + 1),
                };
                let row_total: usize = (0..groups).map(|g| self.confusion[g][c]).sum();
                let cells = (0..groups)
                    .map(|g| {
                        let n = self.confusion[g][c];
                        format!("{n} ({}% col, {}% row)", pct(n, group_totals[g]), pct(n, row_total))
                    })
                    .collect();
                (label, cells)
            })
            .collect();
        let width = rows.iter().flat_map(|(_, cells)| cells.iter().map(String::len)).max().unwrap_or(0).max(8) + 2;

        let mut out = String::new();
        let _ = write!(out, "{:<12}", "Assigned");
        for g in 0..groups {
            let _ = write!(out, "{:>width$}", format!("Group {}", g + 1));
        }
        out.push('\n');
        for (label, cells) in rows {
            let _ = write!(out, "{label:<12}");
            for cell in cells {
                let _ = write!(out, "{cell:>width$}");
            }
            out.push('\n');
        }
        let _ = writeln!(out, "Accuracy    {:.2}%", 100.0 * self.accuracy);
        if let (Some(s), Some(p)) = (self.sensitivity, self.specificity) {
            let _ = writeln!(out, "Sensitivity {s:.3}");
            let _ = writeln!(out, "Specificity {p:.3}");
        }
        out
    }
}

fn pct(n: usize, total: usize) -> String {
    if total == 0 {
        "0.0".into()
    } else {
        format!("{:.1}", 100.0 * n as f64 / total as f64)
    }
}
