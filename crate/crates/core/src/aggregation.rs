//! Aggregation maps, the amalgamated and macro-intervention graphs, and
//! macro-interventions realized through distributions over micro states.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::discrete::{
    digits_of, flat_index, Axis, CategoricalDist, FactorModel, STATE_CAP, ZERO_PROB,
};
use crate::distribution::{Distribution, MacroValue};
use crate::error::{Error, Result};
use crate::gaussian::{AffineFunctional, GaussianDist, LinearSystem};
use crate::linalg;
use crate::model::{check_assumption1, Domain, Scm};

/// Default absolute tolerance for `π(x) = x̄` on the support of a realization.
pub const SUPPORT_TOL: f64 = 1e-8;

/// A surjective, non-injective map from the joint source states of an
/// aggregation group to macro categories.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DiscreteAggregation {
    pub table: Vec<usize>,
    pub macro_card: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AggregationKind {
    Sum,
    Mean,
    Discrete(DiscreteAggregation),
}

impl AggregationKind {
    pub fn name(&self) -> &'static str {
        match self {
            AggregationKind::Sum => "sum",
            AggregationKind::Mean => "mean",
            AggregationKind::Discrete(_) => "discrete",
        }
    }
}

/// Aggregates one node, or a group of nodes treated as a single vector, into
/// a macro variable.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AggregationSpec {
    pub nodes: Vec<String>,
    pub kind: AggregationKind,
    pub macro_id: String,
}

impl AggregationSpec {
    pub fn new<S: AsRef<str>>(nodes: &[S], kind: AggregationKind, macro_id: &str) -> Self {
        Self {
            nodes: nodes.iter().map(|s| s.as_ref().to_string()).collect(),
            kind,
            macro_id: macro_id.to_string(),
        }
    }

    /// Sum aggregation of a single node into `<node>bar`.
    pub fn sum(node: &str) -> Self {
        Self::new(&[node], AggregationKind::Sum, &format!("{node}bar"))
    }

    pub fn discrete(node: &str, table: Vec<usize>, macro_card: usize) -> Self {
        Self::new(
            &[node],
            AggregationKind::Discrete(DiscreteAggregation { table, macro_card }),
            &format!("{node}bar"),
        )
    }
}

/// A mechanism replacement on the micro model.
#[derive(Debug, Clone, PartialEq)]
pub enum Replacement {
    /// `X_comps := intercept + gain·X + U'`, `U' ~ N(0, cov)`; `gain` spans all
    /// micro components.
    Gaussian {
        comps: Vec<usize>,
        intercept: DVector<f64>,
        gain: DMatrix<f64>,
        cov: DMatrix<f64>,
    },
    /// Joint table over `nodes` given `parents` (axis indices).
    Categorical {
        nodes: Vec<usize>,
        parents: Vec<usize>,
        table: Vec<f64>,
    },
}

/// A valid micro model with validated aggregations.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregatedModel {
    scm: Scm,
    aggs: Vec<AggregationSpec>,
}

impl AggregatedModel {
    pub fn new(scm: Scm, aggs: Vec<AggregationSpec>) -> Result<Self> {
        scm.ensure_valid()?;
        let mut seen = BTreeSet::new();
        let mut macros = BTreeSet::new();
        let micro_labels: BTreeSet<String> = match &scm {
            Scm::LinearGaussian(m) => m.component_labels().into_iter().collect(),
            Scm::Categorical(m) => m.nodes().iter().map(|n| n.name().to_string()).collect(),
        };
        for agg in &aggs {
            if agg.nodes.is_empty() {
                return Err(Error::InvalidAggregation(format!(
                    "`{}` aggregates nothing",
                    agg.macro_id
                )));
            }
            for n in &agg.nodes {
                scm.node_index(n)?;
                if !seen.insert(n.clone()) {
                    return Err(Error::DuplicateAggregation(n.clone()));
                }
            }
            if !macros.insert(agg.macro_id.clone()) || micro_labels.contains(&agg.macro_id) {
                return Err(Error::InvalidAggregation(format!(
                    "macro name `{}` is already in use",
                    agg.macro_id
                )));
            }
            check_kind(&scm, agg)?;
            if !check_assumption1(&scm, agg)?.holds {
                return Err(Error::Assumption1Violated(agg.macro_id.clone()));
            }
        }
        Ok(Self { scm, aggs })
    }

    pub fn scm(&self) -> &Scm {
        &self.scm
    }

    pub fn aggs(&self) -> &[AggregationSpec] {
        &self.aggs
    }

    pub fn is_gaussian(&self) -> bool {
        matches!(self.scm, Scm::LinearGaussian(_))
    }

    pub fn agg(&self, macro_id: &str) -> Result<&AggregationSpec> {
        self.aggs
            .iter()
            .find(|a| a.macro_id == macro_id)
            .ok_or_else(|| Error::UnknownVariable(macro_id.to_string()))
    }

    pub fn macro_labels(&self) -> Vec<String> {
        self.aggs.iter().map(|a| a.macro_id.clone()).collect()
    }

    /// Micro component indices (Gaussian) of an aggregation group.
    pub fn group_components(&self, macro_id: &str) -> Result<Vec<usize>> {
        let agg = self.agg(macro_id)?;
        let m = self.scm.as_linear()?;
        let offs = m.offsets();
        let mut out = Vec::new();
        for n in &agg.nodes {
            let i = m.node_index(n)?;
            out.extend(offs[i]..offs[i] + m.nodes()[i].dim);
        }
        Ok(out)
    }

    pub fn group_labels(&self, macro_id: &str) -> Result<Vec<String>> {
        match &self.scm {
            Scm::LinearGaussian(m) => {
                let labels = m.component_labels();
                Ok(self
                    .group_components(macro_id)?
                    .into_iter()
                    .map(|i| labels[i].clone())
                    .collect())
            }
            Scm::Categorical(_) => Ok(self.agg(macro_id)?.nodes.clone()),
        }
    }

    /// Weights of a sum/mean aggregation over the group components.
    pub fn group_weights(&self, macro_id: &str) -> Result<Vec<f64>> {
        let agg = self.agg(macro_id)?;
        let k = self.group_components(macro_id)?.len();
        match agg.kind {
            AggregationKind::Sum => Ok(vec![1.0; k]),
            AggregationKind::Mean => Ok(vec![1.0 / k as f64; k]),
            AggregationKind::Discrete(_) => Err(Error::WrongFamily(
                "discrete aggregation has no weights".into(),
            )),
        }
    }

    /// Weights of the aggregation over all micro components.
    pub fn macro_weights(&self, macro_id: &str) -> Result<DVector<f64>> {
        let d = self.scm.as_linear()?.total_dim();
        let mut w = DVector::zeros(d);
        for (c, v) in self
            .group_components(macro_id)?
            .into_iter()
            .zip(self.group_weights(macro_id)?)
        {
            w[c] = v;
        }
        Ok(w)
    }

    /// All macro variables as one functional of the micro components.
    pub fn macro_functional(&self) -> Result<AffineFunctional> {
        let d = self.scm.as_linear()?.total_dim();
        let k = self.aggs.len();
        let mut w = DMatrix::zeros(k, d);
        for (r, agg) in self.aggs.iter().enumerate() {
            w.row_mut(r)
                .copy_from(&self.macro_weights(&agg.macro_id)?.transpose());
        }
        AffineFunctional::new(w, DVector::zeros(k), self.macro_labels())
    }

    /// Axis indices (categorical) of an aggregation group.
    pub fn group_axes(&self, macro_id: &str) -> Result<Vec<usize>> {
        let m = self.scm.as_categorical()?;
        self.agg(macro_id)?
            .nodes
            .iter()
            .map(|n| m.node_index(n))
            .collect()
    }

    pub fn group_cards(&self, macro_id: &str) -> Result<Vec<usize>> {
        let m = self.scm.as_categorical()?;
        Ok(self
            .group_axes(macro_id)?
            .into_iter()
            .map(|i| m.states(i))
            .collect())
    }

    pub fn macro_card(&self, macro_id: &str) -> Result<usize> {
        match &self.agg(macro_id)?.kind {
            AggregationKind::Discrete(d) => Ok(d.macro_card),
            _ => Err(Error::WrongFamily(format!(
                "`{macro_id}` is not a discrete aggregation"
            ))),
        }
    }

    /// Macro category of a joint source state.
    pub fn macro_of_state(&self, macro_id: &str, state: usize) -> Result<usize> {
        match &self.agg(macro_id)?.kind {
            AggregationKind::Discrete(d) => d.table.get(state).copied().ok_or_else(|| {
                Error::DimensionMismatch(format!("source state {state} out of range"))
            }),
            _ => Err(Error::WrongFamily(format!(
                "`{macro_id}` is not a discrete aggregation"
            ))),
        }
    }

    pub fn linear_system(&self) -> Result<LinearSystem> {
        Ok(LinearSystem::from_model(self.scm.as_linear()?))
    }

    pub fn factor_model(&self) -> Result<FactorModel> {
        FactorModel::from_scm(self.scm.as_categorical()?)
    }

    /// Append every macro variable to a micro joint.
    pub fn attach_macros(&self, micro: Distribution) -> Result<Distribution> {
        match micro {
            Distribution::Gaussian(g) => Ok(Distribution::Gaussian(
                g.extend_with(&self.macro_functional()?)?,
            )),
            Distribution::Categorical(mut c) => {
                for agg in &self.aggs {
                    let AggregationKind::Discrete(d) = &agg.kind else {
                        unreachable!("checked on construction")
                    };
                    let cards = self.group_cards(&agg.macro_id)?;
                    c = c.with_derived_axis(
                        Axis::new(agg.macro_id.clone(), d.macro_card),
                        &agg.nodes,
                        |s| d.table[flat_index(&cards, s)],
                    )?;
                }
                Ok(Distribution::Categorical(c))
            }
        }
    }

    /// Observational joint over micro and macro variables.
    pub fn observational(&self) -> Result<Distribution> {
        self.joint_with(&[])
    }

    /// Joint over micro and macro variables after mechanism replacements.
    pub fn joint_with(&self, replacements: &[Replacement]) -> Result<Distribution> {
        let micro = match &self.scm {
            Scm::LinearGaussian(_) => {
                let mut sys = self.linear_system()?;
                for r in replacements {
                    match r {
                        Replacement::Gaussian {
                            comps,
                            intercept,
                            gain,
                            cov,
                        } => sys.replace_components(comps, intercept, gain, cov)?,
                        Replacement::Categorical { .. } => {
                            return Err(Error::WrongFamily(
                                "categorical replacement on a Gaussian model".into(),
                            ))
                        }
                    }
                }
                Distribution::Gaussian(sys.moments()?)
            }
            Scm::Categorical(_) => {
                let mut fm = self.factor_model()?;
                for r in replacements {
                    match r {
                        Replacement::Categorical {
                            nodes,
                            parents,
                            table,
                        } => fm.replace(nodes, parents, table.clone())?,
                        Replacement::Gaussian { .. } => {
                            return Err(Error::WrongFamily(
                                "Gaussian replacement on a categorical model".into(),
                            ))
                        }
                    }
                }
                Distribution::Categorical(fm.joint(STATE_CAP)?)
            }
        };
        self.attach_macros(micro)
    }

    /// Parentless replacement of an aggregation group by `dist`, a
    /// distribution over the group labels.
    pub fn replacement_for(&self, macro_id: &str, dist: &Distribution) -> Result<Replacement> {
        match dist {
            Distribution::Gaussian(g) => {
                let comps = self.group_components(macro_id)?;
                let d = self.scm.as_linear()?.total_dim();
                if g.dim() != comps.len() {
                    return Err(Error::DimensionMismatch(format!(
                        "realization has {} components, `{macro_id}` aggregates {}",
                        g.dim(),
                        comps.len()
                    )));
                }
                Ok(Replacement::Gaussian {
                    comps,
                    intercept: g.mean.clone(),
                    gain: DMatrix::zeros(g.dim(), d),
                    cov: g.cov.clone(),
                })
            }
            Distribution::Categorical(c) => {
                let nodes = self.group_axes(macro_id)?;
                let cards = self.group_cards(macro_id)?;
                if c.cards() != cards {
                    return Err(Error::DimensionMismatch(format!(
                        "realization axes do not match the group of `{macro_id}`"
                    )));
                }
                Ok(Replacement::Categorical {
                    nodes,
                    parents: Vec::new(),
                    table: c.probs.clone(),
                })
            }
        }
    }

    /// Observational `P(effect | cause = x̄)`.
    pub fn observational_conditional(
        &self,
        cause: &str,
        xbar: MacroValue,
        effect: &str,
    ) -> Result<Distribution> {
        self.check_value(cause, xbar)?;
        self.observational()?
            .marginal(&[cause, effect])?
            .condition(&[(cause, xbar)])
    }

    /// `P(effect | do(cause = x̄))` under `realization`.
    pub fn interventional(
        &self,
        realization: &MicroRealization,
        xbar: MacroValue,
        effect: &str,
    ) -> Result<Distribution> {
        apply_macro_intervention(self, realization, xbar)?.marginal(&[effect])
    }

    fn check_value(&self, macro_id: &str, v: MacroValue) -> Result<()> {
        let agg = self.agg(macro_id)?;
        match (&agg.kind, v) {
            (AggregationKind::Discrete(d), v) => {
                let c = v.as_category()?;
                if c >= d.macro_card {
                    return Err(Error::InadmissibleGrid(format!(
                        "{c} is not a category of `{macro_id}`"
                    )));
                }
                Ok(())
            }
            (_, MacroValue::Real(x)) if x.is_finite() => Ok(()),
            (_, MacroValue::Category(_)) => Ok(()),
            (_, v) => Err(Error::InadmissibleGrid(format!("{v}"))),
        }
    }
}

fn check_kind(scm: &Scm, agg: &AggregationSpec) -> Result<()> {
    let domains: Vec<&Domain> = agg
        .nodes
        .iter()
        .map(|n| Ok(&scm.nodes()[scm.node_index(n)?].domain))
        .collect::<Result<_>>()?;
    match &agg.kind {
        AggregationKind::Sum | AggregationKind::Mean => {
            if domains.iter().any(|d| **d != Domain::Real) {
                return Err(Error::InvalidAggregation(format!(
                    "`{}`: {} aggregation needs real-valued nodes",
                    agg.macro_id,
                    agg.kind.name()
                )));
            }
        }
        AggregationKind::Discrete(d) => {
            if domains.iter().any(|d| matches!(d, Domain::Real)) {
                return Err(Error::InvalidAggregation(format!(
                    "`{}`: discrete aggregation needs categorical nodes",
                    agg.macro_id
                )));
            }
            let states: usize = agg
                .nodes
                .iter()
                .map(|n| scm.nodes()[scm.node_index(n).expect("checked")].states())
                .product();
            if d.table.len() != states {
                return Err(Error::InvalidAggregation(format!(
                    "`{}`: table has {} entries for {states} source states",
                    agg.macro_id,
                    d.table.len()
                )));
            }
            let image: BTreeSet<usize> = d.table.iter().copied().collect();
            if d.table.iter().any(|&v| v >= d.macro_card) || image.len() != d.macro_card {
                return Err(Error::InvalidAggregation(format!(
                    "`{}`: table is not surjective",
                    agg.macro_id
                )));
            }
            if d.macro_card >= states {
                return Err(Error::InvalidAggregation(format!(
                    "`{}`: table is injective",
                    agg.macro_id
                )));
            }
        }
    }
    Ok(())
}

/// Definition of a micro-realization family for one macro variable.
#[derive(Debug, Clone, PartialEq)]
pub enum RealizationFamily {
    /// `P(X | X̄ = x̄)`.
    Natural,
    /// Components in `order` except the last follow their observational
    /// joint; the last takes the residual.
    Sequential {
        order: Vec<usize>,
    },
    /// Point mass at `x̄ · allocation`.
    Deterministic {
        allocation: Vec<f64>,
    },
    Explicit(ExplicitRealization),
}

/// A realization given as a pure function of x̄.
#[derive(Debug, Clone, PartialEq)]
pub enum ExplicitRealization {
    /// `N(intercept + slope·x̄, cov)`.
    GaussianAffine {
        intercept: Vec<f64>,
        slope: Vec<f64>,
        cov: DMatrix<f64>,
    },
    /// Tabulated Gaussians at specific x̄ values.
    GaussianPoints(Vec<(f64, GaussianDist)>),
    /// One distribution over joint source states per macro category.
    Categorical { table: Vec<Vec<f64>> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct MicroRealization {
    pub target: String,
    pub family: RealizationFamily,
    pub support_tol: f64,
}

impl MicroRealization {
    pub fn new(target: &str, family: RealizationFamily) -> Self {
        Self {
            target: target.to_string(),
            family,
            support_tol: SUPPORT_TOL,
        }
    }

    pub fn natural(target: &str) -> Self {
        Self::new(target, RealizationFamily::Natural)
    }

    pub fn sequential(target: &str, order: Vec<usize>) -> Self {
        Self::new(target, RealizationFamily::Sequential { order })
    }

    pub fn deterministic(target: &str, allocation: Vec<f64>) -> Self {
        Self::new(target, RealizationFamily::Deterministic { allocation })
    }

    pub fn explicit(target: &str, e: ExplicitRealization) -> Self {
        Self::new(target, RealizationFamily::Explicit(e))
    }

    pub fn family_name(&self) -> &'static str {
        match self.family {
            RealizationFamily::Natural => "natural",
            RealizationFamily::Sequential { .. } => "sequential",
            RealizationFamily::Deterministic { .. } => "deterministic",
            RealizationFamily::Explicit(_) => "explicit",
        }
    }

    /// Distribution over the group labels attached to `do(x̄)`, after the
    /// support check.
    pub fn realize(&self, model: &AggregatedModel, xbar: MacroValue) -> Result<Distribution> {
        model.check_value(&self.target, xbar)?;
        let labels = model.group_labels(&self.target)?;
        let dist = match &self.family {
            RealizationFamily::Natural => natural_realization(model, &self.target, xbar)?,
            RealizationFamily::Sequential { order } => Distribution::Gaussian(
                sequential_realization(model, &self.target, order, xbar.as_real())?,
            ),
            RealizationFamily::Deterministic { allocation } => {
                if !model.is_gaussian() {
                    return Err(Error::WrongFamily(
                        "deterministic allocation needs a real-valued node".into(),
                    ));
                }
                if allocation.len() != labels.len() {
                    return Err(Error::DimensionMismatch(format!(
                        "allocation has {} entries for {} components",
                        allocation.len(),
                        labels.len()
                    )));
                }
                let x = xbar.as_real();
                let point: Vec<f64> = allocation.iter().map(|a| a * x).collect();
                Distribution::Gaussian(GaussianDist::point_mass(&point, labels.clone())?)
            }
            RealizationFamily::Explicit(e) => explicit_at(model, &self.target, e, xbar, &labels)?,
        };
        check_support(model, &self.target, &dist, xbar, self.support_tol)?;
        Ok(dist)
    }
}

fn explicit_at(
    model: &AggregatedModel,
    target: &str,
    e: &ExplicitRealization,
    xbar: MacroValue,
    labels: &[String],
) -> Result<Distribution> {
    match e {
        ExplicitRealization::GaussianAffine {
            intercept,
            slope,
            cov,
        } => {
            let x = xbar.as_real();
            let mean: Vec<f64> = intercept
                .iter()
                .zip(slope)
                .map(|(a, b)| a + b * x)
                .collect();
            if intercept.len() != slope.len() || mean.len() != labels.len() {
                return Err(Error::DimensionMismatch(
                    "affine realization has the wrong dimension".into(),
                ));
            }
            Ok(Distribution::Gaussian(GaussianDist::new(
                DVector::from_vec(mean),
                cov.clone(),
                labels.to_vec(),
            )?))
        }
        ExplicitRealization::GaussianPoints(points) => {
            let x = xbar.as_real();
            let (_, g) = points
                .iter()
                .find(|(p, _)| (p - x).abs() <= 1e-12 * x.abs().max(1.0))
                .ok_or_else(|| {
                    Error::InadmissibleGrid(format!("no tabulated realization at {x}"))
                })?;
            let mut g = g.clone();
            if g.dim() != labels.len() {
                return Err(Error::DimensionMismatch(
                    "tabulated realization has the wrong dimension".into(),
                ));
            }
            g.labels = labels.to_vec();
            Ok(Distribution::Gaussian(g))
        }
        ExplicitRealization::Categorical { table } => {
            let c = xbar.as_category()?;
            let row = table.get(c).ok_or_else(|| {
                Error::InadmissibleGrid(format!("no realization row for category {c}"))
            })?;
            let cards = model.group_cards(target)?;
            let axes = labels
                .iter()
                .zip(&cards)
                .map(|(l, &k)| Axis::new(l.clone(), k))
                .collect();
            Ok(Distribution::Categorical(CategoricalDist::new(
                axes,
                row.clone(),
            )?))
        }
    }
}

/// Fails unless every support point of `dist` aggregates to `x̄`.
pub fn check_support(
    model: &AggregatedModel,
    target: &str,
    dist: &Distribution,
    xbar: MacroValue,
    tol: f64,
) -> Result<()> {
    let violation = |detail: String| Error::SupportViolation {
        target: target.to_string(),
        value: xbar.to_string(),
        detail,
    };
    match dist {
        Distribution::Gaussian(g) => {
            let w = DVector::from_vec(model.group_weights(target)?);
            if w.len() != g.dim() {
                return Err(Error::DimensionMismatch("realization dimension".into()));
            }
            let mean_gap = (w.dot(&g.mean) - xbar.as_real()).abs();
            let var = (w.transpose() * &g.cov * &w)[(0, 0)];
            if mean_gap > tol || var.abs() > tol {
                return Err(violation(format!(
                    "aggregate mean off by {mean_gap:e}, aggregate variance {var:e}"
                )));
            }
        }
        Distribution::Categorical(c) => {
            let x = xbar.as_category()?;
            let mut off = 0.0;
            for (s, &p) in c.probs.iter().enumerate() {
                if model.macro_of_state(target, s)? != x {
                    off += p;
                }
            }
            if off > tol {
                return Err(violation(format!("mass {off:e} outside the fibre")));
            }
        }
    }
    Ok(())
}

/// `P(X | X̄ = x̄)` over the group labels.
pub fn natural_realization(
    model: &AggregatedModel,
    macro_id: &str,
    xbar: MacroValue,
) -> Result<Distribution> {
    let labels = model.group_labels(macro_id)?;
    let mut keep = labels.clone();
    keep.push(macro_id.to_string());
    model
        .observational()?
        .marginal(&keep)?
        .condition(&[(macro_id, xbar)])
}

/// Observe all components but the last in `order`, force the last to the
/// residual. Sum aggregations only.
pub fn sequential_realization(
    model: &AggregatedModel,
    macro_id: &str,
    order: &[usize],
    xbar: f64,
) -> Result<GaussianDist> {
    let agg = model.agg(macro_id)?;
    if agg.kind != AggregationKind::Sum {
        return Err(Error::InvalidAggregation(format!(
            "sequential realization needs a sum aggregation, `{macro_id}` is {}",
            agg.kind.name()
        )));
    }
    let labels = model.group_labels(macro_id)?;
    let n = labels.len();
    let mut sorted = order.to_vec();
    sorted.sort_unstable();
    if sorted != (0..n).collect::<Vec<_>>() {
        return Err(Error::DimensionMismatch(format!(
            "order {order:?} is not a permutation of 0..{n}"
        )));
    }
    let obs = model.observational()?;
    let obs = obs.as_gaussian()?.marginal(&labels)?;
    let last = order[n - 1];
    let observed = &order[..n - 1];
    let mut mean = DVector::zeros(n);
    let mut cov = DMatrix::zeros(n, n);
    for &i in observed {
        mean[i] = obs.mean[i];
        for &j in observed {
            cov[(i, j)] = obs.cov[(i, j)];
        }
    }
    mean[last] = xbar - observed.iter().map(|&i| obs.mean[i]).sum::<f64>();
    let mut var_last = 0.0;
    for &i in observed {
        let c: f64 = observed.iter().map(|&j| obs.cov[(i, j)]).sum();
        cov[(last, i)] = -c;
        cov[(i, last)] = -c;
        var_last += c;
    }
    cov[(last, last)] = var_last;
    GaussianDist::new(mean, cov, labels)
}

/// Post-intervention joint over micro and macro variables: the group's
/// mechanism is replaced by the realization at `x̄`.
pub fn apply_macro_intervention(
    model: &AggregatedModel,
    realization: &MicroRealization,
    xbar: MacroValue,
) -> Result<Distribution> {
    let dist = realization.realize(model, xbar)?;
    let rep = model.replacement_for(&realization.target, &dist)?;
    model.joint_with(&[rep])
}

/// Replacement drawing the group of `target` from `P(X | X̄ = x̄, B̄ = b)`,
/// with `b` read from the live values of the macros in `given`.
pub fn conditional_natural_replacement<S: AsRef<str>>(
    model: &AggregatedModel,
    target: &str,
    xbar: MacroValue,
    given: &[S],
) -> Result<Replacement> {
    let given: Vec<String> = given.iter().map(|g| g.as_ref().to_string()).collect();
    for g in &given {
        model.agg(g)?;
        if g == target {
            return Err(Error::InvalidAggregation(format!(
                "`{target}` cannot condition on itself"
            )));
        }
    }
    model.check_value(target, xbar)?;
    let obs = model.observational()?;
    match obs {
        Distribution::Gaussian(joint) => {
            let comps = model.group_components(target)?;
            let glabels = model.group_labels(target)?;
            let mut cond_labels = vec![target.to_string()];
            cond_labels.extend(given.iter().cloned());
            let ig = joint.indices_of(&glabels)?;
            let ic = joint.indices_of(&cond_labels)?;
            let s_gc = linalg::select(&joint.cov, &ig, &ic);
            let s_cc = linalg::select(&joint.cov, &ic, &ic);
            let k = &s_gc * linalg::pinv_sym(&s_cc);
            let mu_g = linalg::select_vec(&joint.mean, &ig);
            let mu_c = linalg::select_vec(&joint.mean, &ic);
            let mut intercept = &mu_g - &k * &mu_c;
            intercept += k.column(0) * xbar.as_real();
            let d = model.scm.as_linear()?.total_dim();
            let mut gain = DMatrix::zeros(comps.len(), d);
            for (col, g) in given.iter().enumerate() {
                let w = model.macro_weights(g)?;
                gain += k.column(col + 1) * w.transpose();
            }
            let cov = linalg::select(&joint.cov, &ig, &ig) - &k * s_gc.transpose();
            Ok(Replacement::Gaussian {
                comps,
                intercept,
                gain,
                cov: linalg::symmetrize(&cov),
            })
        }
        Distribution::Categorical(joint) => {
            let nodes = model.group_axes(target)?;
            let gcards = model.group_cards(target)?;
            let x = xbar.as_category()?;
            let mut parents: Vec<usize> = Vec::new();
            for g in &given {
                parents.extend(model.group_axes(g)?);
            }
            parents.sort_unstable();
            parents.dedup();
            let m = model.scm.as_categorical()?;
            let pcards: Vec<usize> = parents.iter().map(|&p| m.states(p)).collect();
            let glabels = model.group_labels(target)?;
            let mut keep = glabels.clone();
            keep.push(target.to_string());
            keep.extend(given.iter().cloned());
            let sub = joint.marginal(&keep)?;
            let width: usize = gcards.iter().product();
            let fibre: Vec<usize> = (0..width)
                .filter(|&s| {
                    model
                        .macro_of_state(target, s)
                        .map(|v| v == x)
                        .unwrap_or(false)
                })
                .collect();
            let mut table = Vec::new();
            for r in 0..pcards.iter().product::<usize>() {
                let pd = digits_of(&pcards, r);
                let mut evidence: Vec<(String, usize)> = vec![(target.to_string(), x)];
                for g in &given {
                    let axes = model.group_axes(g)?;
                    let cards = model.group_cards(g)?;
                    let src: Vec<usize> = axes
                        .iter()
                        .map(|a| pd[parents.iter().position(|p| p == a).expect("collected")])
                        .collect();
                    evidence.push((
                        g.clone(),
                        model.macro_of_state(g, flat_index(&cards, &src))?,
                    ));
                }
                match sub.condition(&evidence) {
                    Ok(c) => table.extend_from_slice(&c.probs),
                    Err(Error::ZeroProbability(_)) => {
                        // Unreachable configuration: any fibre-supported row works.
                        let mut row = vec![0.0; width];
                        for &s in &fibre {
                            row[s] = 1.0 / fibre.len() as f64;
                        }
                        table.extend(row);
                    }
                    Err(e) => return Err(e),
                }
            }
            Ok(Replacement::Categorical {
                nodes,
                parents,
                table,
            })
        }
    }
}

/// Directed edges, as `(from, to)` names.
pub type EdgeSet = BTreeSet<(String, String)>;

/// Micro DAG plus macro nodes and `micro ↔ macro` links.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AmalgamatedGraph {
    pub micro_nodes: Vec<String>,
    pub macro_nodes: Vec<String>,
    pub edges: EdgeSet,
    /// `(micro, macro)` pairs.
    pub links: BTreeSet<(String, String)>,
}

pub fn build_amalgamated(scm: &Scm, aggs: &[AggregationSpec]) -> Result<AmalgamatedGraph> {
    let model = AggregatedModel::new(scm.clone(), aggs.to_vec())?;
    Ok(AmalgamatedGraph::from_model(&model))
}

impl AmalgamatedGraph {
    pub fn from_model(model: &AggregatedModel) -> Self {
        let mut links = BTreeSet::new();
        for a in model.aggs() {
            for n in &a.nodes {
                links.insert((n.clone(), a.macro_id.clone()));
            }
        }
        Self {
            micro_nodes: model
                .scm()
                .nodes()
                .iter()
                .map(|n| n.name().to_string())
                .collect(),
            macro_nodes: model.macro_labels(),
            edges: model.scm().edge_names().into_iter().collect(),
            links,
        }
    }

    /// Graph after `do(macro)`: the macro points into its micro nodes, their
    /// other parents are cut, and the link is dropped.
    pub fn macro_intervention(&self, macro_id: &str) -> Result<MacroInterventionGraph> {
        if !self.macro_nodes.iter().any(|m| m == macro_id) {
            return Err(Error::UnknownVariable(macro_id.to_string()));
        }
        let targets: BTreeSet<String> = self
            .links
            .iter()
            .filter(|(_, m)| m == macro_id)
            .map(|(x, _)| x.clone())
            .collect();
        let mut edges: EdgeSet = self
            .edges
            .iter()
            .filter(|(_, to)| !targets.contains(to))
            .cloned()
            .collect();
        for x in &targets {
            edges.insert((macro_id.to_string(), x.clone()));
        }
        let links = self
            .links
            .iter()
            .filter(|(_, m)| m != macro_id)
            .cloned()
            .collect();
        Ok(MacroInterventionGraph {
            micro_nodes: self.micro_nodes.clone(),
            macro_nodes: self.macro_nodes.clone(),
            edges,
            links,
            intervened: macro_id.to_string(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MacroInterventionGraph {
    pub micro_nodes: Vec<String>,
    pub macro_nodes: Vec<String>,
    pub edges: EdgeSet,
    pub links: BTreeSet<(String, String)>,
    pub intervened: String,
}

/// A perfect intervention on micro nodes: each listed node is set to the
/// given component values (categories for categorical nodes).
#[derive(Debug, Clone, PartialEq)]
pub struct MicroIntervention {
    pub assignments: Vec<(String, Vec<f64>)>,
}

impl MicroIntervention {
    pub fn new(assignments: &[(&str, &[f64])]) -> Self {
        Self {
            assignments: assignments
                .iter()
                .map(|(n, v)| (n.to_string(), v.to_vec()))
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConsistencyWitness {
    pub first: usize,
    pub second: usize,
    /// Values of the macro variables fixed by both interventions.
    pub macro_values: BTreeMap<String, f64>,
    pub effects: [Distribution; 2],
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConsistencyVerdict {
    pub consistent: bool,
    pub witness: Option<ConsistencyWitness>,
}

/// Looks for two micro interventions that induce the same macro
/// intervention but different effects on the remaining macro variables.
pub fn consistency_check_example1(
    model: &AggregatedModel,
    interventions: &[MicroIntervention],
    tol: f64,
) -> Result<ConsistencyVerdict> {
    struct Outcome {
        key: BTreeMap<String, f64>,
        effect: Distribution,
    }
    let mut outcomes = Vec::new();
    for iv in interventions {
        let mut reps = Vec::new();
        let mut set_nodes = BTreeSet::new();
        for (node, values) in &iv.assignments {
            set_nodes.insert(node.clone());
            reps.push(perfect_replacement(model, node, values)?);
        }
        let joint = model.joint_with(&reps)?;
        let mut key = BTreeMap::new();
        let mut rest = Vec::new();
        for agg in model.aggs() {
            if agg.nodes.iter().all(|n| set_nodes.contains(n)) {
                let v = match joint.marginal(&[&agg.macro_id])? {
                    Distribution::Gaussian(g) => g.mean[0],
                    Distribution::Categorical(c) => c
                        .probs
                        .iter()
                        .position(|&p| p > 0.5)
                        .map(|i| i as f64)
                        .unwrap_or(f64::NAN),
                };
                key.insert(agg.macro_id.clone(), v);
            } else {
                rest.push(agg.macro_id.clone());
            }
        }
        outcomes.push(Outcome {
            key,
            effect: joint.marginal(&rest)?,
        });
    }
    for i in 0..outcomes.len() {
        for j in i + 1..outcomes.len() {
            let (a, b) = (&outcomes[i], &outcomes[j]);
            let same_macro = a.key.len() == b.key.len()
                && a.key.iter().zip(&b.key).all(|((ka, va), (kb, vb))| {
                    ka == kb && (va - vb).abs() <= tol * va.abs().max(1.0)
                });
            if !same_macro {
                continue;
            }
            let gap = a.effect.discrepancy(&b.effect)?;
            if gap > tol {
                return Ok(ConsistencyVerdict {
                    consistent: false,
                    witness: Some(ConsistencyWitness {
                        first: i,
                        second: j,
                        macro_values: a.key.clone(),
                        effects: [a.effect.clone(), b.effect.clone()],
                        gap,
                    }),
                });
            }
        }
    }
    Ok(ConsistencyVerdict {
        consistent: true,
        witness: None,
    })
}

fn perfect_replacement(model: &AggregatedModel, node: &str, values: &[f64]) -> Result<Replacement> {
    match model.scm() {
        Scm::LinearGaussian(m) => {
            let i = m.node_index(node)?;
            let dim = m.nodes()[i].dim;
            if values.len() != dim {
                return Err(Error::DimensionMismatch(format!(
                    "`{node}` has {dim} components"
                )));
            }
            let o = m.offsets()[i];
            Ok(Replacement::Gaussian {
                comps: (o..o + dim).collect(),
                intercept: DVector::from_column_slice(values),
                gain: DMatrix::zeros(dim, m.total_dim()),
                cov: DMatrix::zeros(dim, dim),
            })
        }
        Scm::Categorical(m) => {
            let i = m.node_index(node)?;
            let spec = &m.nodes()[i];
            let Domain::Categorical(cards) = &spec.domain else {
                unreachable!("validated")
            };
            let digits: Vec<usize> = values.iter().map(|&v| v as usize).collect();
            if digits.len() != cards.len() || digits.iter().zip(cards).any(|(d, c)| d >= c) {
                return Err(Error::DimensionMismatch(format!(
                    "bad categories for `{node}`"
                )));
            }
            let mut table = vec![0.0; spec.states()];
            table[flat_index(cards, &digits)] = 1.0;
            Ok(Replacement::Categorical {
                nodes: vec![i],
                parents: Vec::new(),
                table,
            })
        }
    }
}

/// `P(X̄ = x̄) > 0` for a categorical macro.
pub fn macro_has_mass(model: &AggregatedModel, macro_id: &str, xbar: usize) -> Result<bool> {
    let m = model.observational()?.marginal(&[macro_id])?;
    Ok(m.as_categorical()?.probs.get(xbar).copied().unwrap_or(0.0) > ZERO_PROB)
}
