//! Dense helpers on top of nalgebra shared by every module.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Condition-number guard used for inverse square roots.
pub const COND_LIMIT: f64 = 1e12;

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

pub fn asymmetry(m: &DMatrix<f64>) -> f64 {
    (m - m.transpose()).amax()
}

pub fn block_diag(blocks: &[DMatrix<f64>]) -> DMatrix<f64> {
    let rows = blocks.iter().map(|b| b.nrows()).sum();
    let cols = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let (mut r, mut c) = (0, 0);
    for b in blocks {
        out.view_mut((r, c), b.shape()).copy_from(b);
        r += b.nrows();
        c += b.ncols();
    }
    out
}

/// Eigenvalues in ascending order together with matching eigenvectors (columns).
pub fn sym_eig(m: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let n = m.nrows();
    if n == 0 {
        return (DVector::zeros(0), DMatrix::zeros(0, 0));
    }
    let eig = SymmetricEigen::new(symmetrize(m));
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = DMatrix::zeros(n, n);
    for (k, &i) in order.iter().enumerate() {
        vectors.set_column(k, &eig.eigenvectors.column(i));
    }
    (values, vectors)
}

pub fn min_eig(m: &DMatrix<f64>) -> f64 {
    sym_eig(m).0.iter().copied().fold(f64::INFINITY, f64::min)
}

pub fn max_eig(m: &DMatrix<f64>) -> f64 {
    sym_eig(m).0.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

/// Symmetric PSD square root; eigenvalues in `[-tol, 0)` are clamped to zero.
pub fn psd_sqrt(m: &DMatrix<f64>, tol: f64) -> Result<DMatrix<f64>> {
    let (vals, vecs) = sym_eig(m);
    let mut d = DVector::zeros(vals.len());
    for (i, &v) in vals.iter().enumerate() {
        if v < -tol {
            return Err(Error::NotPsd(format!("eigenvalue {v:.3e} below -{tol:.1e}")));
        }
        d[i] = v.max(0.0).sqrt();
    }
    Ok(symmetrize(&(&vecs * DMatrix::from_diagonal(&d) * vecs.transpose())))
}

/// `M^{-1/2}` for a symmetric PD matrix with the condition-number guard.
pub fn inv_sqrt(m: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    let (vals, vecs) = sym_eig(m);
    if vals.is_empty() {
        return Ok(DMatrix::zeros(0, 0));
    }
    let lo = vals[0];
    let hi = vals[vals.len() - 1];
    if lo <= 0.0 {
        return Err(Error::NotPsd(format!("{what}: min eigenvalue {lo:.3e} is not positive")));
    }
    let cond = hi / lo;
    if cond > COND_LIMIT {
        return Err(Error::IllConditioned { what: what.into(), cond, limit: COND_LIMIT });
    }
    let d = vals.map(|v| 1.0 / v.sqrt());
    Ok(symmetrize(&(&vecs * DMatrix::from_diagonal(&d) * vecs.transpose())))
}

pub fn singular_values(m: &DMatrix<f64>) -> DVector<f64> {
    if m.is_empty() {
        return DVector::zeros(0);
    }
    m.clone().svd(false, false).singular_values
}

pub fn rank(m: &DMatrix<f64>, rel_tol: f64) -> usize {
    let sv = singular_values(m);
    let top = sv.iter().copied().fold(0.0, f64::max);
    if top == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > rel_tol * top).count()
}

pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    singular_values(m).iter().copied().fold(0.0, f64::max)
}

/// `σmax / σmin` of a matrix (infinite if singular).
pub fn condition_number(m: &DMatrix<f64>) -> f64 {
    let sv = singular_values(m);
    let hi = sv.iter().copied().fold(0.0, f64::max);
    let lo = sv.iter().copied().fold(f64::INFINITY, f64::min);
    if lo == 0.0 {
        f64::INFINITY
    } else {
        hi / lo
    }
}

/// Quadratic form `vᵀ M v`.
pub fn quad(m: &DMatrix<f64>, v: &DVector<f64>) -> f64 {
    v.dot(&(m * v))
}

pub fn stack(parts: &[DVector<f64>]) -> DVector<f64> {
    let len = parts.iter().map(|p| p.len()).sum();
    let mut out = DVector::zeros(len);
    let mut off = 0;
    for p in parts {
        out.rows_mut(off, p.len()).copy_from(p);
        off += p.len();
    }
    out
}

pub fn split(v: &DVector<f64>, sizes: impl IntoIterator<Item = usize>) -> Vec<DVector<f64>> {
    let mut off = 0;
    sizes
        .into_iter()
        .map(|s| {
            let part = v.rows(off, s).into_owned();
            off += s;
            part
        })
        .collect()
}
