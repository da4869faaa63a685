//! Sum aggregation as the first coordinate of a linear change of
//! coordinates, and shift interventions.
//!
//! For `H` with first row `1ᵀ`, `Ȳ = αᵀX = β X̄ + Ū_β` with
//! `β = αᵀΔ`, `Δ = H⁻¹[:, 0]`. Shifting `X̄` by `t` while holding the other
//! coordinates fixed shifts `X` by `tΔ`.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::LinearGaussianScm;
use crate::synthesis::gaussian_inhibitor::PARALLEL_TOL;

/// Tolerance on `ΣΔ = 1` and on `H H⁻¹ = I`.
pub const COORD_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoordinateChange {
    pub h: Vec<Vec<f64>>,
    pub h_inv: Vec<Vec<f64>>,
    pub delta: Vec<f64>,
    pub beta: f64,
    /// `max |H H⁻¹ - I|`.
    pub residual: f64,
}

impl CoordinateChange {
    pub fn h_matrix(&self) -> DMatrix<f64> {
        linalg::from_rows(&self.h).expect("square")
    }

    pub fn h_inv_matrix(&self) -> DMatrix<f64> {
        linalg::from_rows(&self.h_inv).expect("square")
    }
}

fn is_parallel_to_ones(alpha: &DVector<f64>) -> bool {
    let n = alpha.len();
    let perp = alpha - DVector::from_element(n, alpha.sum() / n as f64);
    perp.norm() <= PARALLEL_TOL * alpha.norm().max(1.0)
}

/// `H` with first row `1ᵀ` and `αᵀ H⁻¹[:, 0] = c`.
pub fn construct_h(alpha: &[f64], c: f64) -> Result<CoordinateChange> {
    let n = alpha.len();
    let a = DVector::from_column_slice(alpha);
    if n < 2 || alpha.iter().any(|v| !v.is_finite()) || !c.is_finite() {
        return Err(Error::Hypotheses(
            "need at least two finite weights and a finite target".into(),
        ));
    }
    if is_parallel_to_ones(&a) {
        return Err(Error::Hypotheses("α ∝ 1".into()));
    }
    let ones = DVector::from_element(n, 1.0);
    // ⟨v₁⁰, 1⟩ = 1, then correct along v ∈ 1⊥ with ⟨v, α⟩ ≠ 0.
    let v0 = &ones / n as f64;
    let d = v0.dot(&a);
    let v = &a - &ones * (a.sum() / n as f64);
    let v1 = &v0 + &v * ((c - d) / v.dot(&a));
    complete(alpha, v1)
}

/// `H` whose inverse has `Δ` as its first column.
pub fn from_delta(alpha: &[f64], delta: &[f64]) -> Result<CoordinateChange> {
    if alpha.len() != delta.len() || delta.len() < 2 {
        return Err(Error::DimensionMismatch(format!(
            "α has {} entries, Δ has {}",
            alpha.len(),
            delta.len()
        )));
    }
    let s: f64 = delta.iter().sum();
    if (s - 1.0).abs() > COORD_TOL {
        return Err(Error::Hypotheses(format!("Δ sums to {s}, not 1")));
    }
    complete(alpha, DVector::from_column_slice(delta))
}

/// First row `1ᵀ`, remaining rows an orthonormal basis of `v₁⊥`; then
/// `H v₁ = e₁`.
fn complete(alpha: &[f64], v1: DVector<f64>) -> Result<CoordinateChange> {
    let n = v1.len();
    let unit = &v1 / v1.norm();
    let proj = DMatrix::identity(n, n) - &unit * unit.transpose();
    let eig = linalg::eigen(&proj);
    let mut h = DMatrix::zeros(n, n);
    h.row_mut(0).fill(1.0);
    let mut r = 1;
    for (k, &lambda) in eig.eigenvalues.iter().enumerate() {
        if lambda > 0.5 && r < n {
            h.row_mut(r)
                .copy_from(&eig.eigenvectors.column(k).transpose());
            r += 1;
        }
    }
    if r != n {
        return Err(Error::Verification("could not complete the basis".into()));
    }
    let h_inv = h
        .clone()
        .lu()
        .try_inverse()
        .ok_or_else(|| Error::Verification("H is singular".into()))?;
    let residual = linalg::max_abs(&(&h * &h_inv - DMatrix::identity(n, n)));
    let delta: DVector<f64> = h_inv.column(0).into_owned();
    let gap = linalg::max_abs_vec(&(&delta - &v1));
    if residual > COORD_TOL || gap > COORD_TOL * v1.norm().max(1.0) {
        return Err(Error::Verification(format!(
            "H H⁻¹ residual {residual:e}, first column off by {gap:e}"
        )));
    }
    let beta = DVector::from_column_slice(alpha).dot(&delta);
    Ok(CoordinateChange {
        h: linalg::to_rows(&h),
        h_inv: linalg::to_rows(&h_inv),
        delta: delta.iter().copied().collect(),
        beta,
        residual,
    })
}

/// `Cov(X̄, αᵀX - βX̄)` for `Cov(X) = cov`.
pub fn macro_noise_covariance(alpha: &[f64], cov: &DMatrix<f64>, beta: f64) -> Result<f64> {
    let n = alpha.len();
    if cov.shape() != (n, n) {
        return Err(Error::DimensionMismatch(
            "covariance does not match α".into(),
        ));
    }
    let ones = DVector::from_element(n, 1.0);
    let a = DVector::from_column_slice(alpha);
    Ok((ones.transpose() * cov * &a)[(0, 0)] - beta * (ones.transpose() * cov * &ones)[(0, 0)])
}

/// Micro shift realizing `X̄ ↦ X̄ + shift`.
pub fn shift_allocation(delta: &[f64], shift: f64) -> Result<Vec<f64>> {
    let s: f64 = delta.iter().sum();
    if (s - 1.0).abs() > COORD_TOL || delta.iter().any(|d| !d.is_finite()) {
        return Err(Error::Hypotheses(format!("Δ sums to {s}, not 1")));
    }
    Ok(delta.iter().map(|d| d * shift).collect())
}

/// `Y := aX + N` with jointly Gaussian `(X, N)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScalarLinearModel {
    pub a: f64,
    pub x_mean: f64,
    pub x_var: f64,
    pub n_mean: f64,
    pub n_var: f64,
    pub cov_xn: f64,
}

impl ScalarLinearModel {
    pub fn validate(&self) -> Result<()> {
        let vals = [
            self.a,
            self.x_mean,
            self.x_var,
            self.n_mean,
            self.n_var,
            self.cov_xn,
        ];
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(Error::Hypotheses("non-finite parameter".into()));
        }
        if self.x_var <= 0.0
            || self.n_var < 0.0
            || self.cov_xn * self.cov_xn > self.x_var * self.n_var * (1.0 + 1e-12)
        {
            return Err(Error::Hypotheses(
                "(X, N) covariance is not positive semi-definite".into(),
            ));
        }
        Ok(())
    }

    /// Reads `a` and the moments of `N = Y - aX` from a model with scalar
    /// nodes `x` and `y`.
    pub fn from_scm(model: &LinearGaussianScm, x: &str, y: &str) -> Result<Self> {
        for name in [x, y] {
            let node = &model.nodes()[model.node_index(name)?];
            if node.dim != 1 {
                return Err(Error::DimensionMismatch(format!("`{name}` is not scalar")));
            }
        }
        let a = model
            .coefficient(x, y)
            .map(|c| c[(0, 0)])
            .ok_or_else(|| Error::WrongTopology(format!("no edge {x} → {y}")))?;
        let joint = crate::gaussian::joint_moments(model)?;
        let (mx, vx) = (joint.mean_of(x)?, joint.variance(x)?);
        let (my, vy) = (joint.mean_of(y)?, joint.variance(y)?);
        let cxy = joint.covariance(x, y)?;
        let m = Self {
            a,
            x_mean: mx,
            x_var: vx,
            n_mean: my - a * mx,
            n_var: vy - 2.0 * a * cxy + a * a * vx,
            cov_xn: cxy - a * vx,
        };
        m.validate()?;
        Ok(m)
    }

    /// Mean and variance of `P(Y | X = x)`.
    pub fn observational(&self, x: f64) -> (f64, f64) {
        let k = self.cov_xn / self.x_var;
        (
            self.a * x + self.n_mean + k * (x - self.x_mean),
            self.n_var - k * self.cov_xn,
        )
    }

    /// Mean and variance of `P(Y | do(X := x))`.
    pub fn atomic(&self, x: f64) -> (f64, f64) {
        (self.a * x + self.n_mean, self.n_var)
    }

    /// Mean and variance of `P(Y | X^δ = x)`, `X^δ = X + δ`.
    pub fn shifted(&self, delta: f64, x: f64) -> (f64, f64) {
        let (_, var) = self.observational(x);
        let k = self.cov_xn / self.x_var;
        (
            self.a * x + self.n_mean + k * (x - delta - self.x_mean),
            var,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShiftEquivalence {
    pub atomic: bool,
    pub shift: bool,
    pub atomic_gap: f64,
    pub shift_gap: f64,
}

/// Unconfoundedness by atomic and by shift interventions over the probes.
/// The two verdicts must agree; disagreement is reported as an error.
pub fn shift_equivalence_check(
    model: &ScalarLinearModel,
    xs: &[f64],
    deltas: &[f64],
    tol: f64,
) -> Result<ShiftEquivalence> {
    model.validate()?;
    if xs.is_empty() || !deltas.iter().any(|d| *d != 0.0) {
        return Err(Error::Hypotheses(
            "need probe points and a nonzero shift".into(),
        ));
    }
    let gap = |p: (f64, f64), q: (f64, f64)| (p.0 - q.0).abs().max((p.1 - q.1).abs());
    let atomic_gap = xs
        .iter()
        .map(|&x| gap(model.atomic(x), model.observational(x)))
        .fold(0.0, f64::max);
    let mut shift_gap = 0.0f64;
    for &d in deltas {
        for &x in xs {
            shift_gap = shift_gap.max(gap(model.shifted(d, x), model.observational(x)));
        }
    }
    let out = ShiftEquivalence {
        atomic: atomic_gap <= tol,
        shift: shift_gap <= tol,
        atomic_gap,
        shift_gap,
    };
    if out.atomic != out.shift {
        return Err(Error::Verification(format!(
            "atomic gap {atomic_gap:e} and shift gap {shift_gap:e} disagree"
        )));
    }
    Ok(out)
}
