//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector, SymmetricEigen, SVD};

use crate::error::{Error, Result};

const SVD_EPS: f64 = 1e-15;
const MAX_SWEEPS: usize = 10_000;

/// Thin SVD `A = U diag(s) Vᵀ` with singular values in descending order.
pub struct Svd {
    pub u: DMatrix<f64>,
    pub singular_values: DVector<f64>,
    pub v: DMatrix<f64>,
}

pub fn svd(a: &DMatrix<f64>) -> Result<Svd> {
    if a.iter().any(|x| !x.is_finite()) {
        return Err(Error::NumericalFailure("SVD input has non-finite entries".into()));
    }
    let dec = SVD::try_new(a.clone(), true, true, SVD_EPS, MAX_SWEEPS)
        .ok_or_else(|| Error::NumericalFailure("SVD did not converge".into()))?;
    let u = dec.u.expect("u requested");
    let v = dec.v_t.expect("v requested").transpose();
    Ok(Svd {
        u,
        singular_values: dec.singular_values,
        v,
    })
}

/// Moore–Penrose pseudoinverse; singular values below `rcond * σ_max` are
/// treated as zero.
pub fn pseudo_inverse(a: &DMatrix<f64>, rcond: f64) -> Result<DMatrix<f64>> {
    let Svd {
        u,
        singular_values: s,
        v,
    } = svd(a)?;
    let cutoff = rcond * s.iter().cloned().fold(0.0, f64::max);
    let mut vs = v;
    for (j, &sj) in s.iter().enumerate() {
        let inv = if sj > cutoff { 1.0 / sj } else { 0.0 };
        vs.column_mut(j).scale_mut(inv);
    }
    Ok(vs * u.transpose())
}

/// Eigendecomposition of a symmetric matrix with eigenvalues sorted in
/// descending order (equal eigenvalues keep the solver's order).
pub fn symmetric_eigen_desc(m: &DMatrix<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
    if m.iter().any(|x| !x.is_finite()) {
        return Err(Error::NumericalFailure("eigensolver input has non-finite entries".into()));
    }
    let dec = SymmetricEigen::try_new(m.clone(), SVD_EPS, MAX_SWEEPS)
        .ok_or_else(|| Error::NumericalFailure("symmetric eigensolver did not converge".into()))?;
    let n = dec.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| dec.eigenvalues[b].total_cmp(&dec.eigenvalues[a]));
    let values = DVector::from_iterator(n, order.iter().map(|&i| dec.eigenvalues[i]));
    let vectors = DMatrix::from_fn(m.nrows(), n, |r, c| dec.eigenvectors[(r, order[c])]);
    Ok((values, vectors))
}

/// Flip each column so that its largest-magnitude entry is positive
/// (lowest row index wins ties).
pub fn normalize_column_signs(m: &mut DMatrix<f64>) {
    for mut col in m.column_iter_mut() {
        let mut best = 0;
        for (i, x) in col.iter().enumerate() {
            if x.abs() > col[best].abs() {
                best = i;
            }
        }
        if !col.is_empty() && col[best] < 0.0 {
            col.neg_mut();
        }
    }
}

/// Orthonormal basis for the column space of `y` by modified Gram–Schmidt
/// with one re-orthogonalization pass. Columns whose residual norm falls
/// below `drop_tol * ‖y‖_F` are discarded, so the result may have fewer
/// columns than `y`.
pub fn orthonormal_columns(y: &DMatrix<f64>, drop_tol: f64) -> DMatrix<f64> {
    let threshold = drop_tol * y.norm();
    let mut basis: Vec<DVector<f64>> = Vec::with_capacity(y.ncols());
    for col in y.column_iter() {
        let mut v: DVector<f64> = col.into_owned();
        for _ in 0..2 {
            for q in &basis {
                let proj = q.dot(&v);
                v.axpy(-proj, q, 1.0);
            }
        }
        let norm = v.norm();
        if norm > threshold && norm > 0.0 {
            basis.push(v / norm);
        }
    }
    if basis.is_empty() {
        return DMatrix::zeros(y.nrows(), 0);
    }
    DMatrix::from_columns(&basis)
}

pub fn frobenius_sq(m: &DMatrix<f64>) -> f64 {
    m.iter().map(|x| x * x).sum()
}

pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0, |acc, x| acc.max(x.abs()))
}
