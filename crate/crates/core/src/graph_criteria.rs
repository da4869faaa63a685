//! Validity checks for aggregated DAGs: the chain criterion, macro backdoor
//! adjustment and its generalization to arbitrary adjustment sets.

use std::collections::BTreeSet;

use serde::Serialize;

use crate::aggregation::{conditional_natural_replacement, AggregatedModel};
use crate::confounding::default_grid;
use crate::discrete::{digits_of, CategoricalDist, STATE_CAP};
use crate::distribution::{Distribution, MacroValue};
use crate::error::{Error, Result};
use crate::gaussian::conditional_independent;
use crate::graph::Dag;
use crate::model::Scm;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChainPoint {
    pub ybar: MacroValue,
    pub xbar: MacroValue,
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChainVerdict {
    /// `X̄ ⊥ Z̄ | Ȳ`.
    pub independence_holds: bool,
    pub dependence: f64,
    /// Largest distance between the effects on `Z̄` of `P(Y|ȳ)` and
    /// `P(Y|ȳ,x̄)`.
    pub effect_gap: f64,
    pub points: Vec<ChainPoint>,
    pub tol: f64,
    /// The extra arrow `X̄ → Z̄` is needed.
    pub needs_extra_arrow: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AdjustmentPoint {
    pub treatment: MacroValue,
    pub adjustment: Vec<MacroValue>,
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GeneralizedBackdoorVerdict {
    pub treatment: String,
    pub outcome: String,
    pub adjustment: Vec<String>,
    /// No member of the set descends from the treatment in the macro DAG.
    pub no_descendants: bool,
    /// The set blocks every path into the treatment.
    pub blocks_backdoor_paths: bool,
    /// The outcome with the treatment's micro state frozen is independent of
    /// that micro state given the set.
    pub blocking_condition: bool,
    pub blocking_dependence: f64,
    /// `None` when the set contains a descendant of the treatment; the
    /// adjustment is then not evaluated.
    pub adjustment_gap: Option<f64>,
    pub points: Vec<AdjustmentPoint>,
    /// `P(outcome | do(x̄))` under `P(X | x̄, b)` with `b` drawn as observed.
    pub effects: Vec<(MacroValue, Distribution)>,
    pub tol: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BackdoorVerdict {
    /// `Z̄_y ⊥ Y | X̄`.
    pub blocking_condition: bool,
    pub blocking_dependence: f64,
    /// Largest distance between `P(Z̄|do(ȳ),x̄)` and `P(Z̄|ȳ,x̄)`.
    pub adjustment_gap: f64,
    pub points: Vec<AdjustmentPoint>,
    pub tol: f64,
}

fn single_node(model: &AggregatedModel, macro_id: &str) -> Result<String> {
    let agg = model.agg(macro_id)?;
    match agg.nodes.as_slice() {
        [n] => Ok(n.clone()),
        _ => Err(Error::WrongTopology(format!(
            "`{macro_id}` must aggregate exactly one node"
        ))),
    }
}

fn check_edges(model: &AggregatedModel, nodes: &[&str], expected: &[(&str, &str)]) -> Result<()> {
    let scm = model.scm();
    if scm.nodes().len() != nodes.len() {
        return Err(Error::WrongTopology(format!(
            "expected {} micro nodes, found {}",
            nodes.len(),
            scm.nodes().len()
        )));
    }
    let have: BTreeSet<(String, String)> = scm.edge_names().into_iter().collect();
    let want: BTreeSet<(String, String)> = expected
        .iter()
        .map(|(a, b)| (a.to_string(), b.to_string()))
        .collect();
    if have != want {
        return Err(Error::WrongTopology(format!(
            "expected edges {want:?}, found {have:?}"
        )));
    }
    Ok(())
}

/// Max over states of `|P(a,b,g)P(g) - P(a,g)P(b,g)|`.
pub fn categorical_ci_gap<S: AsRef<str>>(
    d: &CategoricalDist,
    a: &[S],
    b: &[S],
    g: &[S],
) -> Result<f64> {
    let own = |v: &[S]| {
        v.iter()
            .map(|s| s.as_ref().to_string())
            .collect::<Vec<String>>()
    };
    let (a, b, g) = (own(a), own(b), own(g));
    let mut all = a.clone();
    all.extend(b.iter().cloned());
    all.extend(g.iter().cloned());
    let joint = d.marginal(&all)?;
    let ag: Vec<String> = a.iter().chain(&g).cloned().collect();
    let bg: Vec<String> = b.iter().chain(&g).cloned().collect();
    let m_ag = d.marginal(&ag)?;
    let m_bg = d.marginal(&bg)?;
    let m_g = if g.is_empty() {
        None
    } else {
        Some(d.marginal(&g)?)
    };
    let cards = joint.cards();
    let (na, nb) = (a.len(), b.len());
    let mut worst = 0.0f64;
    for (s, &p) in joint.probs.iter().enumerate() {
        let dg = digits_of(&cards, s);
        let (da, rest) = dg.split_at(na);
        let (db, dgv) = rest.split_at(nb);
        let pg = m_g.as_ref().map_or(1.0, |m| m.prob(dgv));
        let pag = m_ag.prob(&[da, dgv].concat());
        let pbg = m_bg.prob(&[db, dgv].concat());
        worst = worst.max((p * pg - pag * pbg).abs());
    }
    Ok(worst)
}

/// Dependence of `a` on `b` given `g`: max partial covariance (Gaussian) or
/// max factorization gap (categorical).
pub fn dependence<S: AsRef<str>>(d: &Distribution, a: &[S], b: &[S], g: &[S]) -> Result<f64> {
    match d {
        Distribution::Gaussian(j) => Ok(conditional_independent(j, a, b, g, 0.0)?.max_partial_cov),
        Distribution::Categorical(c) => categorical_ci_gap(c, a, b, g),
    }
}

fn condition_opt<S: AsRef<str>>(
    d: &Distribution,
    evidence: &[(S, MacroValue)],
) -> Result<Option<Distribution>> {
    match d.condition(evidence) {
        Ok(c) => Ok(Some(c)),
        Err(Error::ZeroProbability(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Effect on `outcome` of drawing the group of `target` from the
/// observational conditional given `evidence`.
fn effect_of_conditional(
    model: &AggregatedModel,
    obs: &Distribution,
    target: &str,
    outcome: &str,
    evidence: &[(String, MacroValue)],
) -> Result<Option<Distribution>> {
    let mut keep = model.group_labels(target)?;
    keep.extend(evidence.iter().map(|(l, _)| l.clone()));
    let Some(real) = condition_opt(&obs.marginal(&keep)?, evidence)? else {
        return Ok(None);
    };
    let rep = model.replacement_for(target, &real)?;
    Ok(Some(model.joint_with(&[rep])?.marginal(&[outcome])?))
}

/// Whether `(x̄, ȳ)` has positive probability (always true for real macros).
fn has_mass(obs: &Distribution, evidence: &[(String, MacroValue)]) -> Result<bool> {
    match obs {
        Distribution::Gaussian(_) => Ok(true),
        Distribution::Categorical(_) => {
            let labels: Vec<&str> = evidence.iter().map(|(l, _)| l.as_str()).collect();
            let m = obs.marginal(&labels)?;
            Ok(condition_opt(&m, evidence)?.is_some())
        }
    }
}

/// Chain `X → Y → Z` aggregated to `X̄, Ȳ, Z̄`.
pub fn chain_check(
    model: &AggregatedModel,
    x: &str,
    y: &str,
    z: &str,
    ybar_grid: Option<&[MacroValue]>,
    xbar_grid: Option<&[MacroValue]>,
    tol: f64,
) -> Result<ChainVerdict> {
    let (nx, ny, nz) = (
        single_node(model, x)?,
        single_node(model, y)?,
        single_node(model, z)?,
    );
    check_edges(model, &[&nx, &ny, &nz], &[(&nx, &ny), (&ny, &nz)])?;
    let ygrid = match ybar_grid {
        Some(g) => g.to_vec(),
        None => default_grid(model, y)?,
    };
    let xgrid = match xbar_grid {
        Some(g) => g.to_vec(),
        None => default_grid(model, x)?,
    };
    let obs = model.observational()?;
    let dep = dependence(&obs, &[x], &[z], &[y])?;
    let mut points = Vec::new();
    for &yv in &ygrid {
        let ev_y = vec![(y.to_string(), yv)];
        let Some(plain) = effect_of_conditional(model, &obs, y, z, &ev_y)? else {
            continue;
        };
        for &xv in &xgrid {
            let ev = vec![(y.to_string(), yv), (x.to_string(), xv)];
            if !has_mass(&obs, &ev)? {
                continue;
            }
            let Some(adjusted) = effect_of_conditional(model, &obs, y, z, &ev)? else {
                continue;
            };
            points.push(ChainPoint {
                ybar: yv,
                xbar: xv,
                gap: plain.discrepancy(&adjusted)?,
            });
        }
    }
    let effect_gap = points.iter().map(|p| p.gap).fold(0.0, f64::max);
    let independence_holds = dep <= tol;
    if independence_holds != (effect_gap <= tol) {
        return Err(Error::Verification(format!(
            "chain criterion: dependence {dep:e} but effect gap {effect_gap:e}"
        )));
    }
    Ok(ChainVerdict {
        independence_holds,
        dependence: dep,
        effect_gap,
        points,
        tol,
        needs_extra_arrow: !independence_holds,
    })
}

/// Macro DAG with `Ā → B̄` whenever some micro edge runs between the groups.
pub fn macro_dag(model: &AggregatedModel) -> Result<Dag> {
    let labels = model.macro_labels();
    let owner = |node: &str| {
        model
            .aggs()
            .iter()
            .find(|a| a.nodes.iter().any(|n| n == node))
            .map(|a| a.macro_id.clone())
    };
    let mut edges = Vec::new();
    for (a, b) in model.scm().edge_names() {
        if let (Some(ma), Some(mb)) = (owner(&a), owner(&b)) {
            if ma != mb {
                edges.push((ma, mb));
            }
        }
    }
    Dag::from_edges(&labels, &edges)
}

/// Joints with every edge leaving the micro nodes of `macro_id` cut; one per
/// frozen joint state for categorical models.
fn frozen_joints(model: &AggregatedModel, macro_id: &str) -> Result<Vec<Distribution>> {
    let nodes = model.agg(macro_id)?.nodes.clone();
    match model.scm() {
        Scm::LinearGaussian(m) => {
            let mut sys = model.linear_system()?;
            for n in &nodes {
                let d = m.nodes()[m.node_index(n)?].dim;
                sys.freeze_outgoing(n, &nalgebra::DVector::zeros(d))?;
            }
            Ok(vec![
                model.attach_macros(Distribution::Gaussian(sys.moments()?))?
            ])
        }
        Scm::Categorical(m) => {
            let axes: Vec<usize> = nodes
                .iter()
                .map(|n| m.node_index(n))
                .collect::<Result<_>>()?;
            let cards: Vec<usize> = axes.iter().map(|&a| m.states(a)).collect();
            let mut out = Vec::new();
            for s in 0..cards.iter().product::<usize>() {
                let d = digits_of(&cards, s);
                let mut fm = model.factor_model()?;
                for (&a, &v) in axes.iter().zip(&d) {
                    fm.freeze_outgoing(a, v);
                }
                out.push(model.attach_macros(Distribution::Categorical(fm.joint(STATE_CAP)?))?);
            }
            Ok(out)
        }
    }
}

fn cartesian(lists: &[Vec<MacroValue>]) -> Vec<Vec<MacroValue>> {
    lists.iter().fold(vec![Vec::new()], |acc, l| {
        acc.iter()
            .flat_map(|prefix| {
                l.iter().map(move |v| {
                    let mut p = prefix.clone();
                    p.push(*v);
                    p
                })
            })
            .collect()
    })
}

/// Back-door adjustment of `outcome` on `treatment` by the macro set
/// `adjustment`, with `do(x̄)` realized as `P(X | x̄, b)`.
pub fn generalized_backdoor<S: AsRef<str>>(
    model: &AggregatedModel,
    treatment: &str,
    outcome: &str,
    adjustment: &[S],
    dag: Option<&Dag>,
    treatment_grid: Option<&[MacroValue]>,
    tol: f64,
) -> Result<GeneralizedBackdoorVerdict> {
    let b: Vec<String> = adjustment.iter().map(|s| s.as_ref().to_string()).collect();
    model.agg(treatment)?;
    model.agg(outcome)?;
    if treatment == outcome {
        return Err(Error::Hypotheses("treatment and outcome coincide".into()));
    }
    for m in &b {
        model.agg(m)?;
        if m == treatment || m == outcome {
            return Err(Error::Hypotheses(format!(
                "`{m}` cannot be in the adjustment set"
            )));
        }
    }
    let derived = macro_dag(model)?;
    let g = match dag {
        Some(g) => {
            for (p, c) in derived.edges() {
                let (pn, cn) = (&derived.names()[p], &derived.names()[c]);
                let (pi, ci) = (g.index(pn)?, g.index(cn)?);
                if !g.children(pi).contains(&ci) {
                    return Err(Error::Hypotheses(format!(
                        "macro DAG lacks the edge {pn} → {cn}"
                    )));
                }
            }
            g.clone()
        }
        None => derived,
    };
    let ti = g.index(treatment)?;
    let tj = g.index(outcome)?;
    let bi: Vec<usize> = b.iter().map(|m| g.index(m)).collect::<Result<_>>()?;
    let desc = g.descendants(ti);
    let no_descendants = bi.iter().all(|i| !desc.contains(i));
    let blocks_backdoor_paths = g.without_outgoing(ti).d_separated(&[ti], &[tj], &bi);

    let tlabels = model.group_labels(treatment)?;
    let mut blocking_dependence = 0.0f64;
    for fj in frozen_joints(model, treatment)? {
        blocking_dependence =
            blocking_dependence.max(dependence(&fj, &[outcome.to_string()], &tlabels, &b)?);
    }

    let grid = match treatment_grid {
        _ if !no_descendants => Vec::new(),
        Some(g) => g.to_vec(),
        None => default_grid(model, treatment)?,
    };
    let bgrids: Vec<Vec<MacroValue>> = b
        .iter()
        .map(|m| default_grid(model, m))
        .collect::<Result<_>>()?;
    let obs = model.observational()?;
    let mut keep = vec![treatment.to_string(), outcome.to_string()];
    keep.extend(b.iter().cloned());
    let obs_small = obs.marginal(&keep)?;
    let mut points = Vec::new();
    let mut effects = Vec::new();
    for &xv in &grid {
        let rep = conditional_natural_replacement(model, treatment, xv, &b)?;
        let post = model.joint_with(&[rep])?;
        effects.push((xv, post.marginal(&[outcome])?));
        let mut pkeep = vec![outcome.to_string()];
        pkeep.extend(b.iter().cloned());
        let post_small = post.marginal(&pkeep)?;
        for combo in cartesian(&bgrids) {
            let ev_b: Vec<(String, MacroValue)> =
                b.iter().cloned().zip(combo.iter().copied()).collect();
            let mut ev = vec![(treatment.to_string(), xv)];
            ev.extend(ev_b.iter().cloned());
            if !has_mass(&obs, &ev)? {
                continue;
            }
            let Some(o) = condition_opt(&obs_small, &ev)? else {
                continue;
            };
            let i = if ev_b.is_empty() {
                post_small.clone()
            } else {
                match condition_opt(&post_small, &ev_b)? {
                    Some(d) => d,
                    None => continue,
                }
            };
            points.push(AdjustmentPoint {
                treatment: xv,
                adjustment: combo,
                gap: o.discrepancy(&i)?,
            });
        }
    }
    let gap = points.iter().map(|p| p.gap).fold(0.0, f64::max);
    let adjustment_gap = no_descendants.then_some(gap);
    let blocking_condition = blocking_dependence <= tol;
    if no_descendants && blocking_condition && gap > tol {
        return Err(Error::Verification(format!(
            "blocking holds but the adjustment gap is {gap:e}"
        )));
    }
    Ok(GeneralizedBackdoorVerdict {
        treatment: treatment.to_string(),
        outcome: outcome.to_string(),
        adjustment: b,
        no_descendants,
        blocks_backdoor_paths,
        blocking_condition,
        blocking_dependence,
        adjustment_gap,
        points,
        effects,
        tol,
    })
}

/// `X → Y`, `X → Z`, `Y → Z` aggregated to `X̄, Ȳ, Z̄`; adjusts `Ȳ → Z̄`
/// by `X̄`.
pub fn backdoor_check(
    model: &AggregatedModel,
    x: &str,
    y: &str,
    z: &str,
    ybar_grid: Option<&[MacroValue]>,
    tol: f64,
) -> Result<BackdoorVerdict> {
    let (nx, ny, nz) = (
        single_node(model, x)?,
        single_node(model, y)?,
        single_node(model, z)?,
    );
    check_edges(
        model,
        &[&nx, &ny, &nz],
        &[(&nx, &ny), (&nx, &nz), (&ny, &nz)],
    )?;
    let g = generalized_backdoor(model, y, z, &[x], None, ybar_grid, tol)?;
    Ok(BackdoorVerdict {
        blocking_condition: g.blocking_condition,
        blocking_dependence: g.blocking_dependence,
        adjustment_gap: g.adjustment_gap.unwrap_or(f64::INFINITY),
        points: g.points,
        tol,
    })
}
