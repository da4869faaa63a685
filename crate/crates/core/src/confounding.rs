//! Macro-confounding between a macro cause and a macro effect under a
//! given micro-realization.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::aggregation::{AggregatedModel, AggregationKind, MicroRealization};
use crate::distribution::{Distribution, MacroValue};
use crate::error::{Error, Result};
use crate::gaussian::GaussianDist;

/// Default tolerance of the exact engines.
pub const EXACT_TOL: f64 = 1e-8;

/// Variance (or missing probability mass) below which a distribution counts
/// as deterministic.
pub const DEGENERATE_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Verdict {
    Inhibiting,
    Inducing,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Inhibiting => "INHIBITING",
            Verdict::Inducing => "INDUCING",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConfoundingReport {
    pub pair: (String, String),
    pub realization: String,
    pub grid: Vec<MacroValue>,
    pub observational: Vec<Distribution>,
    pub interventional: Vec<Distribution>,
    pub discrepancies: Vec<f64>,
    pub verdict: Verdict,
    pub max_discrepancy: f64,
    pub tol: f64,
}

/// `μ̄ - 2σ̄, μ̄, μ̄ + 2σ̄` for real macros; every category with positive
/// probability for discrete ones.
pub fn default_grid(model: &AggregatedModel, cause: &str) -> Result<Vec<MacroValue>> {
    let marginal = model.observational()?.marginal(&[cause])?;
    Ok(match marginal {
        Distribution::Gaussian(g) => {
            let (m, s) = (g.mean[0], g.cov[(0, 0)].max(0.0).sqrt());
            vec![(m - 2.0 * s).into(), m.into(), (m + 2.0 * s).into()]
        }
        Distribution::Categorical(c) => c
            .probs
            .iter()
            .enumerate()
            .filter(|(_, &p)| p > crate::discrete::ZERO_PROB)
            .map(|(i, _)| MacroValue::Category(i))
            .collect(),
    })
}

fn check_grid(model: &AggregatedModel, cause: &str, grid: &[MacroValue]) -> Result<()> {
    let agg = model.agg(cause)?;
    for &x in grid {
        match &agg.kind {
            AggregationKind::Discrete(d) => {
                let c = x
                    .as_category()
                    .map_err(|_| Error::InadmissibleGrid(x.to_string()))?;
                if c >= d.macro_card || !crate::aggregation::macro_has_mass(model, cause, c)? {
                    return Err(Error::InadmissibleGrid(format!(
                        "{cause} = {c} has zero probability"
                    )));
                }
            }
            _ => {
                if !x.as_real().is_finite() {
                    return Err(Error::InadmissibleGrid(x.to_string()));
                }
            }
        }
    }
    Ok(())
}

/// Compare `P(effect | x̄)` with `P(effect | do(x̄))` on every grid point.
pub fn classify_realization(
    model: &AggregatedModel,
    realization: &MicroRealization,
    effect: &str,
    grid: Option<&[MacroValue]>,
    tol: f64,
) -> Result<ConfoundingReport> {
    let cause = realization.target.as_str();
    model.agg(effect)?;
    let grid = match grid {
        Some(g) => g.to_vec(),
        None => default_grid(model, cause)?,
    };
    check_grid(model, cause, &grid)?;
    let mut observational = Vec::new();
    let mut interventional = Vec::new();
    let mut discrepancies = Vec::new();
    for &x in &grid {
        let obs = model.observational_conditional(cause, x, effect)?;
        let int = model.interventional(realization, x, effect)?;
        discrepancies.push(obs.discrepancy(&int)?);
        observational.push(obs);
        interventional.push(int);
    }
    let max_discrepancy = discrepancies.iter().copied().fold(0.0, f64::max);
    let verdict = if max_discrepancy <= tol {
        Verdict::Inhibiting
    } else {
        Verdict::Inducing
    };
    Ok(ConfoundingReport {
        pair: (cause.to_string(), effect.to_string()),
        realization: realization.family_name().to_string(),
        grid,
        observational,
        interventional,
        discrepancies,
        verdict,
        max_discrepancy,
        tol,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RepresentabilityReport {
    pub grid: Vec<MacroValue>,
    pub deterministic_do: Vec<bool>,
    pub stochastic_observational: Vec<bool>,
    pub representable: bool,
}

/// Flags grid points where `do(x̄)` makes the effect deterministic while the
/// observational conditional is not: no macro SCM can produce both.
pub fn check_representability(
    model: &AggregatedModel,
    realization: &MicroRealization,
    effect: &str,
    grid: Option<&[MacroValue]>,
) -> Result<RepresentabilityReport> {
    let cause = realization.target.as_str();
    let grid = match grid {
        Some(g) => g.to_vec(),
        None => default_grid(model, cause)?,
    };
    check_grid(model, cause, &grid)?;
    let mut deterministic_do = Vec::new();
    let mut stochastic_observational = Vec::new();
    for &x in &grid {
        let int = model.interventional(realization, x, effect)?;
        let obs = model.observational_conditional(cause, x, effect)?;
        deterministic_do.push(int.is_degenerate(DEGENERATE_TOL));
        stochastic_observational.push(!obs.is_degenerate(DEGENERATE_TOL));
    }
    let representable = !deterministic_do
        .iter()
        .zip(&stochastic_observational)
        .any(|(d, s)| *d && *s);
    Ok(RepresentabilityReport {
        grid,
        deterministic_do,
        stochastic_observational,
        representable,
    })
}

/// The macro equation `Ȳ = β X̄ + Ñ` implied by a realization in a linear
/// model, with `Ñ` taken under the observational distribution.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StructuralEquationReport {
    pub beta: f64,
    /// Whether the do-mean is affine in x̄ over the probed points.
    pub affine: bool,
    pub noise_mean: f64,
    pub noise_var: f64,
    pub noise_cov_with_cause: f64,
    pub noise_independent: bool,
}

impl StructuralEquationReport {
    /// Joint of `(X̄, Ȳ)` generated by `Ȳ = β X̄ + Ñ` from the cause
    /// marginal and the noise moments.
    pub fn implied_joint(
        &self,
        cause: &GaussianDist,
        cause_label: &str,
        effect_label: &str,
    ) -> Result<GaussianDist> {
        let (mx, vx) = (cause.mean[0], cause.cov[(0, 0)]);
        let b = self.beta;
        let c = self.noise_cov_with_cause;
        let mean = DVector::from_vec(vec![mx, b * mx + self.noise_mean]);
        let cov = DMatrix::from_row_slice(
            2,
            2,
            &[
                vx,
                b * vx + c,
                b * vx + c,
                b * b * vx + 2.0 * b * c + self.noise_var,
            ],
        );
        GaussianDist::new(
            mean,
            cov,
            vec![cause_label.to_string(), effect_label.to_string()],
        )
    }
}

pub fn structural_equation_report(
    model: &AggregatedModel,
    realization: &MicroRealization,
    effect: &str,
) -> Result<StructuralEquationReport> {
    if !model.is_gaussian() {
        return Err(Error::WrongFamily(
            "structural equation report needs a linear-Gaussian model".into(),
        ));
    }
    let cause = realization.target.as_str();
    for m in [cause, effect] {
        if model.agg(m)?.kind != AggregationKind::Sum {
            return Err(Error::InvalidAggregation(format!(
                "`{m}` is not a sum aggregation"
            )));
        }
    }
    let obs = model.observational()?;
    let obs = obs.as_gaussian()?.marginal(&[cause, effect])?;
    let (mx, vx) = (obs.mean[0], obs.cov[(0, 0)]);
    let step = vx.sqrt().max(1.0);
    let points = [mx, mx + step, mx - step];
    let means: Vec<f64> = points
        .iter()
        .map(|&x| {
            Ok(model
                .interventional(realization, x.into(), effect)?
                .as_gaussian()?
                .mean[0])
        })
        .collect::<Result<_>>()?;
    let beta = (means[1] - means[0]) / step;
    let predicted = means[0] - beta * step;
    let affine = (predicted - means[2]).abs() <= 1e-8 * means[2].abs().max(1.0);
    let cyx = obs.cov[(0, 1)];
    let vy = obs.cov[(1, 1)];
    let noise_cov_with_cause = cyx - beta * vx;
    let noise_var = (vy - 2.0 * beta * cyx + beta * beta * vx).max(0.0);
    Ok(StructuralEquationReport {
        beta,
        affine,
        noise_mean: obs.mean[1] - beta * mx,
        noise_var,
        noise_cov_with_cause,
        noise_independent: noise_cov_with_cause.abs() <= EXACT_TOL * vx.max(1.0),
    })
}
