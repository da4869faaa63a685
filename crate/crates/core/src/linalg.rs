//! Small dense linear-algebra helpers shared by the exact engines.
//!
//! Everything here works on possibly rank-deficient symmetric matrices: the
//! pseudo-inverse drops eigenvalues below `1e-10 * max |eigenvalue|`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

/// Relative eigenvalue cutoff for pseudo-inverses and PSD checks.
pub const PINV_RCOND: f64 = 1e-10;

/// Absolute tolerance on negative eigenvalues of a covariance.
pub const PSD_TOL: f64 = 1e-10;

pub fn symmetrize(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a + a.transpose()) * 0.5
}

pub fn max_asymmetry(a: &DMatrix<f64>) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..a.nrows() {
        for j in 0..i {
            worst = worst.max((a[(i, j)] - a[(j, i)]).abs());
        }
    }
    worst
}

pub fn eigen(a: &DMatrix<f64>) -> SymmetricEigen<f64, nalgebra::Dyn> {
    SymmetricEigen::new(symmetrize(a))
}

pub fn min_eigenvalue(a: &DMatrix<f64>) -> f64 {
    if a.nrows() == 0 {
        return 0.0;
    }
    eigen(a)
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min)
}

/// Moore-Penrose pseudo-inverse of a symmetric matrix.
pub fn pinv_sym(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    if n == 0 {
        return DMatrix::zeros(0, 0);
    }
    let eig = eigen(a);
    let scale = eig.eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let cutoff = PINV_RCOND * scale;
    let mut inv = DMatrix::zeros(n, n);
    if scale == 0.0 {
        return inv;
    }
    for (k, &lambda) in eig.eigenvalues.iter().enumerate() {
        if lambda.abs() > cutoff {
            let v = eig.eigenvectors.column(k);
            inv += (v * v.transpose()) / lambda;
        }
    }
    inv
}

/// Numerical rank of a symmetric PSD matrix under the pseudo-inverse cutoff.
pub fn rank_sym(a: &DMatrix<f64>) -> usize {
    if a.nrows() == 0 {
        return 0;
    }
    let eig = eigen(a);
    let scale = eig.eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if scale == 0.0 {
        return 0;
    }
    eig.eigenvalues
        .iter()
        .filter(|l| l.abs() > PINV_RCOND * scale)
        .count()
}

/// A factor `L` with `L Lᵀ = a` for a PSD matrix, negative eigenvalues clamped to zero.
pub fn psd_factor(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    if n == 0 {
        return DMatrix::zeros(0, 0);
    }
    let eig = eigen(a);
    let mut l = eig.eigenvectors.clone();
    for (k, &lambda) in eig.eigenvalues.iter().enumerate() {
        let s = lambda.max(0.0).sqrt();
        l.column_mut(k).scale_mut(s);
    }
    l
}

/// Largest absolute entry of a matrix (0 for an empty one).
pub fn max_abs(a: &DMatrix<f64>) -> f64 {
    a.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

pub fn max_abs_vec(a: &DVector<f64>) -> f64 {
    a.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

pub fn from_row_major(rows: usize, cols: usize, data: &[f64]) -> Option<DMatrix<f64>> {
    if data.len() != rows * cols {
        return None;
    }
    Some(DMatrix::from_row_slice(rows, cols, data))
}

pub fn to_row_major(a: &DMatrix<f64>) -> Vec<f64> {
    let mut out = Vec::with_capacity(a.len());
    for i in 0..a.nrows() {
        for j in 0..a.ncols() {
            out.push(a[(i, j)]);
        }
    }
    out
}

pub fn to_rows(a: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..a.nrows())
        .map(|i| (0..a.ncols()).map(|j| a[(i, j)]).collect())
        .collect()
}

pub fn from_rows(rows: &[Vec<f64>]) -> Option<DMatrix<f64>> {
    let n = rows.len();
    let m = rows.first().map_or(0, |r| r.len());
    if rows.iter().any(|r| r.len() != m) {
        return None;
    }
    Some(DMatrix::from_fn(n, m, |i, j| rows[i][j]))
}

/// Submatrix on the given row and column index lists.
pub fn select(a: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |i, j| a[(rows[i], cols[j])])
}

pub fn select_vec(a: &DVector<f64>, idx: &[usize]) -> DVector<f64> {
    DVector::from_fn(idx.len(), |i, _| a[idx[i]])
}
