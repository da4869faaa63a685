//! Conditional tables `P(Ȳ | x_i, z_j)` with a prescribed null combination.
//!
//! Given `v` (`M × N`, entries summing to zero) and per-row vectors `u_i`
//! (each summing to zero), the table satisfies
//! `Σ_ij P_ij v_ij = 0` and `Σ_j P_ij u_ij ≠ 0` for every required row.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};

/// `Σ_j P_ij u_ij` counts as zero below this max-norm, relative to `|u_i|`.
pub const COND2_TOL: f64 = 1e-9;

/// `Σ v` counts as zero below this, relative to `Σ |v|`.
pub const SUM_TOL: f64 = 1e-9;

const MAX_HALVINGS: usize = 50;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KernelTable {
    /// `rows[i][j]` is the distribution of `Ȳ` at `(x_i, z_j)`.
    pub rows: Vec<Vec<Vec<f64>>>,
    /// `max_k |Σ_ij P_ij[k] v_ij|`.
    pub residual: f64,
    /// `max_k |Σ_j P_ij[k] u_ij|` per row.
    pub row_gaps: Vec<f64>,
}

impl KernelTable {
    pub fn k(&self) -> usize {
        self.rows
            .first()
            .and_then(|r| r.first())
            .map_or(0, |p| p.len())
    }
}

/// Residual of the null combination and the per-row gaps of a table.
pub fn kernel_conditions(
    rows: &[Vec<Vec<f64>>],
    v: &DMatrix<f64>,
    u: &DMatrix<f64>,
) -> (f64, Vec<f64>) {
    let k = rows.first().and_then(|r| r.first()).map_or(0, |p| p.len());
    let mut total = vec![0.0; k];
    let mut gaps = Vec::with_capacity(rows.len());
    for (i, row) in rows.iter().enumerate() {
        let mut g = vec![0.0; k];
        for (j, p) in row.iter().enumerate() {
            for c in 0..k {
                total[c] += p[c] * v[(i, j)];
                g[c] += p[c] * u[(i, j)];
            }
        }
        gaps.push(g.iter().fold(0.0f64, |m, x| m.max(x.abs())));
    }
    (total.iter().fold(0.0f64, |m, x| m.max(x.abs())), gaps)
}

/// Table for `M ≥ 3`, `N ≥ 2` with the gap required on every row.
pub fn discrete_kernel_construction(
    v: &DMatrix<f64>,
    u: &DMatrix<f64>,
    k: usize,
) -> Result<KernelTable> {
    if v.nrows() < 3 || v.ncols() < 2 {
        return Err(Error::Hypotheses(format!(
            "need at least 3 rows and 2 columns, got {}×{}",
            v.nrows(),
            v.ncols()
        )));
    }
    kernel_table(v, u, k, &vec![true; v.nrows()])
}

/// Core construction; `need_gap[i]` marks the rows that must satisfy the
/// second condition. No lower bound on the number of rows.
pub fn kernel_table(
    v: &DMatrix<f64>,
    u: &DMatrix<f64>,
    k: usize,
    need_gap: &[bool],
) -> Result<KernelTable> {
    let (m, n) = v.shape();
    if u.shape() != (m, n) || need_gap.len() != m || m == 0 || n == 0 {
        return Err(Error::DimensionMismatch(format!(
            "v is {m}×{n}, u is {}×{}, {} row flags",
            u.nrows(),
            u.ncols(),
            need_gap.len()
        )));
    }
    if v.iter().chain(u.iter()).any(|x| !x.is_finite()) {
        return Err(Error::Hypotheses("non-finite input".into()));
    }
    if need_gap.iter().any(|&b| b) && k < 2 {
        return Err(Error::Hypotheses(
            "a nonzero gap needs at least two effect categories".into(),
        ));
    }
    if k == 0 {
        return Err(Error::Hypotheses("empty effect space".into()));
    }
    let vscale: f64 = v.iter().map(|x| x.abs()).sum();
    if v.sum().abs() > SUM_TOL * vscale.max(1.0) {
        return Err(Error::Hypotheses(format!(
            "entries of v sum to {:e}",
            v.sum()
        )));
    }
    for i in 0..m {
        let ui = u.row(i);
        if ui.sum().abs() > SUM_TOL * ui.iter().map(|x| x.abs()).sum::<f64>().max(1.0) {
            return Err(Error::Hypotheses(format!("u_{i} does not sum to zero")));
        }
        if need_gap[i] && kernel_direction(&v.row(i).transpose(), &ui.transpose()).is_none() {
            return Err(Error::Hypotheses(format!(
                "u_{i} lies in the span of v_{i}"
            )));
        }
    }

    let mut rows = initial_rows(v, k);
    for i in 0..m {
        if !need_gap[i] {
            continue;
        }
        let (_, gaps) = kernel_conditions(&rows, v, u);
        if gaps[i] > COND2_TOL * u.row(i).norm() {
            continue;
        }
        let d =
            kernel_direction(&v.row(i).transpose(), &u.row(i).transpose()).expect("checked above");
        let margin = rows[i]
            .iter()
            .map(|p| p[0].min(p[1]))
            .fold(f64::INFINITY, f64::min);
        let mut eps = 0.25 * margin;
        let mut done = false;
        for _ in 0..MAX_HALVINGS {
            let mut trial = rows.clone();
            for (j, p) in trial[i].iter_mut().enumerate() {
                p[0] -= eps * d[j];
                p[1] += eps * d[j];
            }
            let (res, gaps) = kernel_conditions(&trial, v, u);
            let valid = trial[i].iter().all(|p| p.iter().all(|&x| x >= 0.0));
            if valid && res <= 1e-12 * vscale.max(1.0) && gaps[i] > COND2_TOL * u.row(i).norm() {
                rows = trial;
                done = true;
                break;
            }
            eps *= 0.5;
        }
        if !done {
            return Err(Error::Verification(format!(
                "no admissible step for row {i}"
            )));
        }
    }

    let (residual, row_gaps) = kernel_conditions(&rows, v, u);
    for row in &rows {
        for p in row {
            let s: f64 = p.iter().sum();
            if (s - 1.0).abs() > 1e-12 || p.iter().any(|&x| x < 0.0) {
                return Err(Error::Verification(format!(
                    "row {p:?} is not a distribution"
                )));
            }
        }
    }
    if residual > 1e-12 * vscale.max(1.0) {
        return Err(Error::Verification(format!(
            "null combination residual {residual:e}"
        )));
    }
    for i in (0..m).filter(|&i| need_gap[i]) {
        if row_gaps[i] <= COND2_TOL * u.row(i).norm() {
            return Err(Error::Verification(format!("row {i} has no gap")));
        }
    }
    Ok(KernelTable {
        rows,
        residual,
        row_gaps,
    })
}

/// Unit vector orthogonal to `v` with a nonzero inner product with `u`:
/// the part of `u` orthogonal to `v`.
fn kernel_direction(v: &DVector<f64>, u: &DVector<f64>) -> Option<DVector<f64>> {
    let vv = v.norm_squared();
    let d = if vv == 0.0 {
        u.clone()
    } else {
        u - v * (u.dot(v) / vv)
    };
    if d.norm() <= 1e-9 * u.norm().max(f64::MIN_POSITIVE) || u.norm() == 0.0 {
        return None;
    }
    Some(&d / d.norm())
}

/// Strictly interior distribution, distinct for distinct `t`.
fn interior(k: usize, t: usize) -> Vec<f64> {
    let theta = 0.1 * (t + 1) as f64;
    let w: Vec<f64> = (0..k)
        .map(|c| (theta * c as f64 / k as f64).exp())
        .collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|x| x / s).collect()
}

fn initial_rows(v: &DMatrix<f64>, k: usize) -> Vec<Vec<Vec<f64>>> {
    let (m, n) = v.shape();
    let uniform = vec![1.0 / k as f64; k];
    let mut rows = vec![vec![uniform.clone(); n]; m];
    if v.iter().all(|&x| x == 0.0) {
        return rows;
    }
    if let Some(pos) = v.iter().position(|&x| x == 0.0) {
        // Column-major position.
        let (i, j) = (pos % m, pos / m);
        if k >= 2 {
            let eps = 1.0 / (4.0 * k as f64);
            rows[i][j][0] += eps;
            rows[i][j][1] -= eps;
        }
        return rows;
    }
    let mut s = 0.0;
    let mut mix = vec![0.0; k];
    let mut t = 0;
    for i in 0..m {
        for j in 0..n {
            if v[(i, j)] > 0.0 {
                let p = interior(k, t);
                t += 1;
                for c in 0..k {
                    mix[c] += v[(i, j)] * p[c];
                }
                s += v[(i, j)];
                rows[i][j] = p;
            }
        }
    }
    let neg: Vec<f64> = mix.iter().map(|x| x / s).collect();
    for i in 0..m {
        for j in 0..n {
            if v[(i, j)] < 0.0 {
                rows[i][j] = neg.clone();
            }
        }
    }
    rows
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn random_inputs(m: usize, n: usize, seed: u64) -> (DMatrix<f64>, DMatrix<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut v = DMatrix::from_fn(m, n, |_, _| rng.random_range(-1.0..1.0));
        let mean = v.mean();
        v.add_scalar_mut(-mean);
        let mut u = DMatrix::from_fn(m, n, |_, _| rng.random_range(-1.0..1.0));
        for i in 0..m {
            let mean = u.row(i).mean();
            u.row_mut(i).add_scalar_mut(-mean);
        }
        (v, u)
    }

    #[test]
    fn random_inputs_pass_both_conditions() {
        for seed in 0..10 {
            let (v, u) = random_inputs(3, 2, seed);
            let t = discrete_kernel_construction(&v, &u, 2).unwrap();
            let (res, gaps) = kernel_conditions(&t.rows, &v, &u);
            assert!(res < 1e-12);
            assert!(gaps.iter().all(|&g| g > 1e-9));
        }
    }

    #[test]
    fn zero_v_gives_interior_table() {
        let v = DMatrix::zeros(3, 2);
        let u = DMatrix::from_row_slice(3, 2, &[1.0, -1.0, 0.5, -0.5, -2.0, 2.0]);
        let t = discrete_kernel_construction(&v, &u, 3).unwrap();
        assert!(t
            .rows
            .iter()
            .flatten()
            .flatten()
            .all(|&p| p > 0.0 && p < 1.0));
        assert!(t.row_gaps.iter().all(|&g| g > 1e-9));
    }

    #[test]
    fn single_zero_entry_uses_two_vectors() {
        let v = DMatrix::from_row_slice(3, 2, &[0.0, 1.0, -0.5, 0.25, 0.25, -1.0]);
        let u = DMatrix::from_row_slice(3, 2, &[1.0, -1.0, 1.0, -1.0, 1.0, -1.0]);
        let t = discrete_kernel_construction(&v, &u, 2).unwrap();
        assert!(t.residual < 1e-12);
        assert!(t.row_gaps.iter().all(|&g| g > 1e-9));
    }

    #[test]
    fn hypotheses_are_checked() {
        let (v, u) = random_inputs(3, 2, 1);
        assert!(matches!(
            discrete_kernel_construction(&v, &u, 1),
            Err(Error::Hypotheses(_))
        ));
        let (v2, u2) = random_inputs(2, 2, 1);
        assert!(matches!(
            discrete_kernel_construction(&v2, &u2, 2),
            Err(Error::Hypotheses(_))
        ));
        let mut bad = v.clone();
        bad[(0, 0)] += 1.0;
        assert!(matches!(
            discrete_kernel_construction(&bad, &u, 2),
            Err(Error::Hypotheses(_))
        ));
        // u_0 parallel to v_0
        let mut v3 = v.clone();
        v3[(0, 0)] = 1.0;
        v3[(0, 1)] = -1.0;
        let s = v3.sum();
        v3[(1, 0)] -= s;
        let mut u3 = u.clone();
        u3[(0, 0)] = 2.0;
        u3[(0, 1)] = -2.0;
        assert!(matches!(
            discrete_kernel_construction(&v3, &u3, 2),
            Err(Error::Hypotheses(_))
        ));
    }
}
