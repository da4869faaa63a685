//! Realizations that hide confounding in linear-Gaussian models.
//!
//! With `Ȳ = αᵀX + N` and `N` not downstream of `X`, a realization
//! `X ~ N(m(x̄), Σ)` supported on `1ᵀX = x̄` gives
//! `Ȳ | do(x̄) ~ N(αᵀm + E[N], αᵀΣα + Var(N))`. Matching the observational
//! conditional needs `αᵀΣα = Var(Ȳ|x̄) - Var(N)` with `Σ1 = 0`, which is
//! possible iff the slack is non-negative and `α` is not parallel to `1`.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::aggregation::{
    AggregatedModel, AggregationKind, ExplicitRealization, MicroRealization, Replacement,
};
use crate::confounding::{classify_realization, ConfoundingReport, EXACT_TOL};
use crate::distribution::MacroValue;
use crate::error::{Error, Result};
use crate::gaussian::{AffineFunctional, GaussianDist};

/// `α` is treated as parallel to `1` when its orthogonal part is this small
/// relative to `|α|`.
pub const PARALLEL_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianInhibitorProblem {
    pub alpha: Vec<f64>,
    /// Joint over the `X` components followed by `N` as the last label.
    pub joint: GaussianDist,
    pub xbar_grid: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InhibitorPoint {
    pub xbar: f64,
    pub mean: Vec<f64>,
    /// `|P(Ȳ|x̄) - P(Ȳ|do(x̄))|` from the closed forms.
    pub discrepancy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InhibitorSolution {
    pub feasible: bool,
    pub reason: Option<String>,
    /// `Var(Ȳ|x̄) - Var(N)`; the same at every x̄.
    pub slack: f64,
    pub cond_var: f64,
    pub noise_var: f64,
    /// Unit vector along the part of α orthogonal to `1`.
    pub direction: Vec<f64>,
    pub scale: f64,
    /// `scale · direction directionᵀ`.
    pub cov: Vec<Vec<f64>>,
    /// `m(x̄) = intercept + slope·x̄`.
    pub intercept: Vec<f64>,
    pub slope: Vec<f64>,
    pub points: Vec<InhibitorPoint>,
}

impl InhibitorSolution {
    pub fn cov_matrix(&self) -> DMatrix<f64> {
        let n = self.direction.len();
        DMatrix::from_fn(n, n, |i, j| self.cov[i][j])
    }

    pub fn mean_at(&self, xbar: f64) -> Vec<f64> {
        self.intercept
            .iter()
            .zip(&self.slope)
            .map(|(a, b)| a + b * xbar)
            .collect()
    }

    pub fn to_explicit(&self) -> Result<ExplicitRealization> {
        if !self.feasible {
            return Err(Error::Hypotheses(format!(
                "no inhibiting realization: {}",
                self.reason.as_deref().unwrap_or("infeasible")
            )));
        }
        Ok(ExplicitRealization::GaussianAffine {
            intercept: self.intercept.clone(),
            slope: self.slope.clone(),
            cov: self.cov_matrix(),
        })
    }
}

impl GaussianInhibitorProblem {
    pub fn new(alpha: Vec<f64>, joint: GaussianDist, xbar_grid: Vec<f64>) -> Result<Self> {
        if alpha.is_empty() || joint.dim() != alpha.len() + 1 {
            return Err(Error::DimensionMismatch(format!(
                "α has {} entries, joint has {} components (expected one extra for N)",
                alpha.len(),
                joint.dim()
            )));
        }
        if alpha.iter().chain(&xbar_grid).any(|v| !v.is_finite()) {
            return Err(Error::InadmissibleGrid("non-finite α or grid value".into()));
        }
        Ok(Self {
            alpha,
            joint,
            xbar_grid,
        })
    }

    /// Reads `α` off unit interventions on the group of `cause` and sets
    /// `N = Ȳ - αᵀX`. Both macros must be sum aggregations.
    pub fn from_model(
        model: &AggregatedModel,
        cause: &str,
        effect: &str,
        xbar_grid: Vec<f64>,
    ) -> Result<Self> {
        if !model.is_gaussian() {
            return Err(Error::WrongFamily(
                "the Gaussian inhibitor needs a linear-Gaussian model".into(),
            ));
        }
        for m in [cause, effect] {
            if model.agg(m)?.kind != AggregationKind::Sum {
                return Err(Error::InvalidAggregation(format!(
                    "`{m}` is not a sum aggregation"
                )));
            }
        }
        let alpha = total_effects(model, cause, effect)?;
        let labels = model.group_labels(cause)?;
        let obs = model.observational()?;
        let obs = obs.as_gaussian()?;
        let mut w = vec![0.0; obs.dim()];
        w[obs.index_of(effect)?] = 1.0;
        for (l, a) in labels.iter().zip(&alpha) {
            w[obs.index_of(l)?] -= a;
        }
        let with_n = obs.extend_with(&AffineFunctional::row(&w, "N"))?;
        let mut keep = labels.clone();
        keep.push("N".into());
        Self::new(alpha, with_n.marginal(&keep)?, xbar_grid)
    }

    fn n(&self) -> usize {
        self.alpha.len()
    }

    /// `(E[X̄], Var(X̄), E[Ȳ], Var(Ȳ), Cov(X̄,Ȳ), E[N], Var(N))`.
    fn moments(&self) -> [f64; 7] {
        let n = self.n();
        let mut e = DVector::zeros(n + 1);
        e.rows_mut(0, n).fill(1.0);
        let mut a = DVector::zeros(n + 1);
        a.rows_mut(0, n)
            .copy_from(&DVector::from_column_slice(&self.alpha));
        a[n] = 1.0;
        let s = &self.joint.cov;
        let mu = &self.joint.mean;
        [
            e.dot(mu),
            (e.transpose() * s * &e)[(0, 0)],
            a.dot(mu),
            (a.transpose() * s * &a)[(0, 0)],
            (e.transpose() * s * &a)[(0, 0)],
            mu[n],
            s[(n, n)],
        ]
    }

    /// `Var(Ȳ|x̄)` by conditioning the joint of `(X̄, Ȳ)`.
    pub fn conditional_variance_schur(&self) -> Result<f64> {
        let n = self.n();
        let mut w = DMatrix::zeros(2, n + 1);
        for i in 0..n {
            w[(0, i)] = 1.0;
            w[(1, i)] = self.alpha[i];
        }
        w[(1, n)] = 1.0;
        let f = AffineFunctional::new(w, DVector::zeros(2), vec!["Xbar".into(), "Ybar".into()])?;
        let pair = self.joint.push_forward(&f)?;
        if pair.cov[(0, 0)] <= 1e-14 {
            return Err(Error::ZeroVariance("Xbar".into()));
        }
        let cond = pair.condition_on_labels(&["Xbar"], &[pair.mean[0]])?;
        Ok(cond.cov[(0, 0)])
    }

    /// `‖Q⊥(N + αᵀX)‖²` in the covariance inner product, `Q⊥` removing the
    /// span of `X̄`.
    pub fn conditional_variance_geometric(&self) -> Result<f64> {
        let n = self.n();
        let s = &self.joint.cov;
        let inner = |a: &DVector<f64>, b: &DVector<f64>| (a.transpose() * s * b)[(0, 0)];
        let mut xbar = DVector::zeros(n + 1);
        xbar.rows_mut(0, n).fill(1.0);
        let mut y = DVector::zeros(n + 1);
        y.rows_mut(0, n)
            .copy_from(&DVector::from_column_slice(&self.alpha));
        y[n] = 1.0;
        let norm2 = inner(&xbar, &xbar);
        if norm2 <= 1e-14 {
            return Err(Error::ZeroVariance("Xbar".into()));
        }
        let coef = inner(&y, &xbar) / norm2;
        let q = &y - xbar * coef;
        Ok(inner(&q, &q))
    }
}

/// `α_i`: change of `E[effect]` under `do(X_i := 1)` against `do(X := 0)`.
pub fn total_effects(model: &AggregatedModel, cause: &str, effect: &str) -> Result<Vec<f64>> {
    let comps = model.group_components(cause)?;
    let d = model.scm().as_linear()?.total_dim();
    let k = comps.len();
    let mean_at = |x: DVector<f64>| -> Result<f64> {
        let rep = Replacement::Gaussian {
            comps: comps.clone(),
            intercept: x,
            gain: DMatrix::zeros(k, d),
            cov: DMatrix::zeros(k, k),
        };
        model.joint_with(&[rep])?.as_gaussian()?.mean_of(effect)
    };
    let base = mean_at(DVector::zeros(k))?;
    (0..k)
        .map(|i| {
            let mut e = DVector::zeros(k);
            e[i] = 1.0;
            Ok(mean_at(e)? - base)
        })
        .collect()
}

pub fn gaussian_inhibitor(problem: &GaussianInhibitorProblem) -> Result<InhibitorSolution> {
    let n = problem.n();
    let alpha = DVector::from_column_slice(&problem.alpha);
    let ones = DVector::from_element(n, 1.0);
    let perp = &alpha - &ones * (alpha.sum() / n as f64);
    let [mx, vx, my, _vy, cxy, mu_n, var_n] = problem.moments();
    if vx <= 1e-14 {
        return Err(Error::ZeroVariance("Xbar".into()));
    }
    let cond_var = problem.conditional_variance_schur()?;
    let slack = cond_var - var_n;
    let mut sol = InhibitorSolution {
        feasible: false,
        reason: None,
        slack,
        cond_var,
        noise_var: var_n,
        direction: vec![0.0; n],
        scale: 0.0,
        cov: vec![vec![0.0; n]; n],
        intercept: vec![0.0; n],
        slope: vec![0.0; n],
        points: Vec::new(),
    };
    if perp.norm() <= PARALLEL_TOL * alpha.norm().max(1.0) {
        sol.reason = Some("α ∝ 1".into());
        return Ok(sol);
    }
    let tol = 1e-12 * cond_var.abs().max(var_n.abs()).max(1.0);
    if slack < -tol {
        sol.reason = Some(format!("Var(Ȳ|x̄) - Var(N) = {slack:e} < 0"));
        return Ok(sol);
    }
    let slack_eff = slack.max(0.0);
    let v = &perp / perp.norm();
    // αᵀv = |α⊥|
    let scale = slack_eff / perp.norm_squared();
    let cov = &v * v.transpose() * scale;

    // Minimum-norm solve of 1ᵀm = x̄, αᵀm = E[Ȳ|x̄] - E[N].
    let mut a = DMatrix::zeros(2, n);
    a.row_mut(0).fill(1.0);
    a.row_mut(1).copy_from(&alpha.transpose());
    let gram = &a * a.transpose();
    let gram_inv = gram
        .try_inverse()
        .ok_or_else(|| Error::Degenerate("α and 1 are dependent".into()))?;
    let pinv = a.transpose() * gram_inv;
    let beta = cxy / vx;
    let rhs_at = |x: f64| DVector::from_vec(vec![x, my + beta * (x - mx) - mu_n]);
    let m0 = &pinv * rhs_at(0.0);
    let m1 = &pinv * rhs_at(1.0) - &m0;

    sol.feasible = true;
    sol.direction = v.iter().copied().collect();
    sol.scale = scale;
    sol.cov = (0..n)
        .map(|i| cov.row(i).iter().copied().collect())
        .collect();
    sol.intercept = m0.iter().copied().collect();
    sol.slope = m1.iter().copied().collect();
    for &x in &problem.xbar_grid {
        let m = &m0 + &m1 * x;
        let do_mean = alpha.dot(&m) + mu_n;
        let do_var = (alpha.transpose() * &cov * &alpha)[(0, 0)] + var_n;
        let obs_mean = my + beta * (x - mx);
        let discrepancy = ((do_mean - obs_mean).abs() / obs_mean.abs().max(1.0))
            .max((do_var - cond_var).abs() / cond_var.abs().max(1.0));
        sol.points.push(InhibitorPoint {
            xbar: x,
            mean: m.iter().copied().collect(),
            discrepancy,
        });
    }
    check_solution(problem, &sol)?;
    Ok(sol)
}

/// Post-conditions of a feasible solution; a failure is a construction bug.
fn check_solution(problem: &GaussianInhibitorProblem, sol: &InhibitorSolution) -> Result<()> {
    let alpha = DVector::from_column_slice(&problem.alpha);
    let cov = sol.cov_matrix();
    let ones = DVector::from_element(alpha.len(), 1.0);
    let scale = 1.0 + sol.cond_var.abs() + sol.noise_var.abs();
    let null = (&cov * &ones).norm();
    let quad = (alpha.transpose() * &cov * &alpha)[(0, 0)];
    let min_eig = crate::linalg::min_eigenvalue(&cov);
    if null > 1e-8 * scale
        || (quad - sol.slack.max(0.0)).abs() > 1e-8 * scale
        || min_eig < -1e-10 * scale
    {
        return Err(Error::Verification(format!(
            "inhibitor covariance: |Σ1| = {null:e}, αᵀΣα - slack = {:e}, min eigenvalue {min_eig:e}",
            quad - sol.slack
        )));
    }
    for p in &sol.points {
        let sum: f64 = p.mean.iter().sum();
        if (sum - p.xbar).abs() > 1e-8 * p.xbar.abs().max(1.0) || p.discrepancy > EXACT_TOL {
            return Err(Error::Verification(format!(
                "inhibitor at x̄ = {}: 1ᵀm = {sum}, discrepancy {:e}",
                p.xbar, p.discrepancy
            )));
        }
    }
    Ok(())
}

/// A synthesized realization checked against the full model.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifiedInhibitor {
    pub solution: InhibitorSolution,
    pub report: Option<ConfoundingReport>,
}

/// Build the problem from `model`, solve it and, when feasible, classify the
/// explicit realization on the full micro model.
pub fn synthesize_gaussian_inhibitor(
    model: &AggregatedModel,
    cause: &str,
    effect: &str,
    xbar_grid: Vec<f64>,
) -> Result<VerifiedInhibitor> {
    let problem = GaussianInhibitorProblem::from_model(model, cause, effect, xbar_grid.clone())?;
    let solution = gaussian_inhibitor(&problem)?;
    if !solution.feasible {
        return Ok(VerifiedInhibitor {
            solution,
            report: None,
        });
    }
    let r = MicroRealization::explicit(cause, solution.to_explicit()?);
    let grid: Vec<MacroValue> = xbar_grid.iter().map(|&x| x.into()).collect();
    let report = classify_realization(model, &r, effect, Some(&grid), EXACT_TOL)?;
    Ok(VerifiedInhibitor {
        solution,
        report: Some(report),
    })
}
