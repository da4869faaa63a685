//! Exact inference for finite categorical systems by full enumeration.
//!
//! Flat tables use mixed-radix indexing with the last axis fastest, the same
//! order as CPT rows in model files.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::CategoricalScm;

/// Default cap on the number of enumerated joint states.
pub const STATE_CAP: usize = 10_000_000;

/// Probability below which an event counts as impossible.
pub const ZERO_PROB: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Axis {
    pub label: String,
    pub card: usize,
}

impl Axis {
    pub fn new(label: impl Into<String>, card: usize) -> Self {
        Self {
            label: label.into(),
            card,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CategoricalJson")]
pub struct CategoricalDist {
    pub axes: Vec<Axis>,
    pub probs: Vec<f64>,
}

#[derive(Deserialize)]
struct CategoricalJson {
    axes: Vec<Axis>,
    probs: Vec<f64>,
}

impl TryFrom<CategoricalJson> for CategoricalDist {
    type Error = Error;

    fn try_from(j: CategoricalJson) -> Result<Self> {
        CategoricalDist::new(j.axes, j.probs)
    }
}

/// Multiply out a mixed-radix index.
pub fn flat_index(cards: &[usize], digits: &[usize]) -> usize {
    cards.iter().zip(digits).fold(0, |acc, (c, d)| acc * c + d)
}

/// Inverse of [`flat_index`].
pub fn digits_of(cards: &[usize], mut index: usize) -> Vec<usize> {
    let mut out = vec![0; cards.len()];
    for k in (0..cards.len()).rev() {
        out[k] = index % cards[k];
        index /= cards[k];
    }
    out
}

impl CategoricalDist {
    pub fn new(axes: Vec<Axis>, probs: Vec<f64>) -> Result<Self> {
        let size: usize = axes.iter().map(|a| a.card).product();
        if probs.len() != size {
            return Err(Error::DimensionMismatch(format!(
                "{} probabilities for a state space of {size}",
                probs.len()
            )));
        }
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::Parse("negative or non-finite probability".into()));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Parse(format!("probabilities sum to {total}")));
        }
        Ok(Self { axes, probs })
    }

    pub fn point_mass(axes: Vec<Axis>, digits: &[usize]) -> Result<Self> {
        let cards: Vec<usize> = axes.iter().map(|a| a.card).collect();
        if digits.len() != cards.len() || digits.iter().zip(&cards).any(|(d, c)| d >= c) {
            return Err(Error::DimensionMismatch(
                "point outside the state space".into(),
            ));
        }
        let mut probs = vec![0.0; cards.iter().product()];
        probs[flat_index(&cards, digits)] = 1.0;
        Ok(Self { axes, probs })
    }

    pub fn uniform(axes: Vec<Axis>) -> Self {
        let n: usize = axes.iter().map(|a| a.card).product();
        Self {
            axes,
            probs: vec![1.0 / n as f64; n],
        }
    }

    pub fn cards(&self) -> Vec<usize> {
        self.axes.iter().map(|a| a.card).collect()
    }

    pub fn labels(&self) -> Vec<String> {
        self.axes.iter().map(|a| a.label.clone()).collect()
    }

    pub fn axis_index(&self, label: &str) -> Result<usize> {
        self.axes
            .iter()
            .position(|a| a.label == label)
            .ok_or_else(|| Error::UnknownVariable(label.to_string()))
    }

    pub fn prob(&self, digits: &[usize]) -> f64 {
        self.probs[flat_index(&self.cards(), digits)]
    }

    /// Marginal over `labels`, in the given order.
    pub fn marginal<S: AsRef<str>>(&self, labels: &[S]) -> Result<CategoricalDist> {
        let idx: Vec<usize> = labels
            .iter()
            .map(|l| self.axis_index(l.as_ref()))
            .collect::<Result<_>>()?;
        let cards = self.cards();
        let out_axes: Vec<Axis> = idx.iter().map(|&i| self.axes[i].clone()).collect();
        let out_cards: Vec<usize> = out_axes.iter().map(|a| a.card).collect();
        let mut probs = vec![0.0; out_cards.iter().product()];
        for (s, &p) in self.probs.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            let d = digits_of(&cards, s);
            let sub: Vec<usize> = idx.iter().map(|&i| d[i]).collect();
            probs[flat_index(&out_cards, &sub)] += p;
        }
        Ok(CategoricalDist {
            axes: out_axes,
            probs,
        })
    }

    /// Bayes conditioning; evidence axes are removed.
    pub fn condition<S: AsRef<str>>(&self, evidence: &[(S, usize)]) -> Result<CategoricalDist> {
        let mut fixed = Vec::new();
        for (label, value) in evidence {
            let i = self.axis_index(label.as_ref())?;
            if *value >= self.axes[i].card {
                return Err(Error::DimensionMismatch(format!(
                    "category {value} out of range for `{}`",
                    label.as_ref()
                )));
            }
            fixed.push((i, *value));
        }
        let cards = self.cards();
        let keep: Vec<usize> = (0..cards.len())
            .filter(|i| !fixed.iter().any(|(j, _)| j == i))
            .collect();
        let out_axes: Vec<Axis> = keep.iter().map(|&i| self.axes[i].clone()).collect();
        let out_cards: Vec<usize> = out_axes.iter().map(|a| a.card).collect();
        let mut probs = vec![0.0; out_cards.iter().product()];
        let mut total = 0.0;
        for (s, &p) in self.probs.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            let d = digits_of(&cards, s);
            if fixed.iter().all(|&(i, v)| d[i] == v) {
                let sub: Vec<usize> = keep.iter().map(|&i| d[i]).collect();
                probs[flat_index(&out_cards, &sub)] += p;
                total += p;
            }
        }
        if total <= ZERO_PROB {
            let ev: Vec<String> = evidence
                .iter()
                .map(|(l, v)| format!("{}={v}", l.as_ref()))
                .collect();
            return Err(Error::ZeroProbability(ev.join(", ")));
        }
        for p in probs.iter_mut() {
            *p /= total;
        }
        Ok(CategoricalDist {
            axes: out_axes,
            probs,
        })
    }

    /// Append an axis that is a deterministic function of existing axes;
    /// `map` receives the source digits in the order of `sources`.
    pub fn with_derived_axis<S: AsRef<str>>(
        &self,
        axis: Axis,
        sources: &[S],
        map: impl Fn(&[usize]) -> usize,
    ) -> Result<CategoricalDist> {
        let idx: Vec<usize> = sources
            .iter()
            .map(|l| self.axis_index(l.as_ref()))
            .collect::<Result<_>>()?;
        let cards = self.cards();
        let mut out_cards = cards.clone();
        out_cards.push(axis.card);
        let mut probs = vec![0.0; out_cards.iter().product()];
        for (s, &p) in self.probs.iter().enumerate() {
            let mut d = digits_of(&cards, s);
            let src: Vec<usize> = idx.iter().map(|&i| d[i]).collect();
            let v = map(&src);
            if v >= axis.card {
                return Err(Error::InvalidAggregation(format!(
                    "derived value {v} out of range for `{}`",
                    axis.label
                )));
            }
            d.push(v);
            probs[flat_index(&out_cards, &d)] = p;
        }
        let mut axes = self.axes.clone();
        axes.push(axis);
        Ok(CategoricalDist { axes, probs })
    }

    pub fn tv_distance(&self, other: &CategoricalDist) -> Result<f64> {
        if self.axes != other.axes {
            return Err(Error::DimensionMismatch(
                "comparing distributions over different axes".into(),
            ));
        }
        Ok(0.5
            * self
                .probs
                .iter()
                .zip(&other.probs)
                .map(|(a, b)| (a - b).abs())
                .sum::<f64>())
    }

    /// Whether a single state carries all the mass.
    pub fn is_degenerate(&self, tol: f64) -> bool {
        self.probs.iter().any(|&p| p >= 1.0 - tol)
    }

    pub fn total(&self) -> f64 {
        self.probs.iter().sum()
    }
}

/// A conditional table `P(children | parents)`, rows over parent
/// configurations, columns over joint child configurations.
#[derive(Debug, Clone, PartialEq)]
pub struct Factor {
    pub parents: Vec<usize>,
    pub children: Vec<usize>,
    pub table: Vec<f64>,
}

/// A categorical model as a product of factors over named axes.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorModel {
    pub axes: Vec<Axis>,
    pub factors: Vec<Factor>,
}

impl FactorModel {
    /// One axis per node (joint state of its components).
    pub fn from_scm(model: &CategoricalScm) -> Result<Self> {
        let v = model.validate();
        if !v.is_empty() {
            return Err(Error::InvalidModel(v));
        }
        let axes = model
            .nodes()
            .iter()
            .map(|n| Axis::new(n.name(), n.states()))
            .collect();
        let factors = (0..model.nodes().len())
            .map(|i| Factor {
                parents: model.parents(i),
                children: vec![i],
                table: model.cpt(i).to_vec(),
            })
            .collect();
        Ok(Self { axes, factors })
    }

    pub fn axis_index(&self, label: &str) -> Result<usize> {
        self.axes
            .iter()
            .position(|a| a.label == label)
            .ok_or_else(|| Error::UnknownVariable(label.to_string()))
    }

    /// Replace the mechanisms of `children` jointly by `table`, a conditional
    /// over the given `parents`.
    pub fn replace(
        &mut self,
        children: &[usize],
        parents: &[usize],
        table: Vec<f64>,
    ) -> Result<()> {
        let rows: usize = parents.iter().map(|&p| self.axes[p].card).product();
        let width: usize = children.iter().map(|&c| self.axes[c].card).product();
        if table.len() != rows * width {
            return Err(Error::DimensionMismatch(format!(
                "replacement table has {} entries, expected {}",
                table.len(),
                rows * width
            )));
        }
        for row in table.chunks(width) {
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > 1e-9 || row.iter().any(|p| *p < 0.0) {
                return Err(Error::DimensionMismatch(
                    "replacement row is not a distribution".into(),
                ));
            }
        }
        for f in &self.factors {
            let hit = f.children.iter().any(|c| children.contains(c));
            let all = f.children.iter().all(|c| children.contains(c));
            if hit && !all {
                return Err(Error::DimensionMismatch(
                    "replacement splits an existing joint mechanism".into(),
                ));
            }
        }
        self.factors
            .retain(|f| !f.children.iter().any(|c| children.contains(c)));
        self.factors.push(Factor {
            parents: parents.to_vec(),
            children: children.to_vec(),
            table,
        });
        Ok(())
    }

    /// Children of `axis` see the constant `value` instead of it.
    pub fn freeze_outgoing(&mut self, axis: usize, value: usize) {
        let cards: Vec<usize> = self.axes.iter().map(|a| a.card).collect();
        for f in self.factors.iter_mut() {
            let Some(pos) = f.parents.iter().position(|&p| p == axis) else {
                continue;
            };
            let pcards: Vec<usize> = f.parents.iter().map(|&p| cards[p]).collect();
            let width: usize = f.children.iter().map(|&c| cards[c]).product();
            let mut kept = Vec::new();
            for r in 0..pcards.iter().product::<usize>() {
                if digits_of(&pcards, r)[pos] == value {
                    kept.extend_from_slice(&f.table[r * width..(r + 1) * width]);
                }
            }
            f.parents.remove(pos);
            f.table = kept;
        }
    }

    /// Enumerate the joint over all axes.
    pub fn joint(&self, cap: usize) -> Result<CategoricalDist> {
        let cards: Vec<usize> = self.axes.iter().map(|a| a.card).collect();
        let states: u128 = cards.iter().map(|&c| c as u128).product();
        if states > cap as u128 {
            return Err(Error::StateSpaceTooLarge { states, cap });
        }
        let mut covered = vec![0usize; cards.len()];
        for f in &self.factors {
            for &c in &f.children {
                covered[c] += 1;
            }
        }
        if let Some(i) = covered.iter().position(|&k| k != 1) {
            return Err(Error::WrongTopology(format!(
                "axis `{}` has {} mechanisms",
                self.axes[i].label, covered[i]
            )));
        }
        let n = states as usize;
        let mut probs = vec![0.0; n];
        for (s, slot) in probs.iter_mut().enumerate() {
            let d = digits_of(&cards, s);
            let mut p = 1.0;
            for f in &self.factors {
                let row = f.parents.iter().fold(0, |acc, &q| acc * cards[q] + d[q]);
                let col = f.children.iter().fold(0, |acc, &q| acc * cards[q] + d[q]);
                let width: usize = f.children.iter().map(|&c| cards[c]).product();
                p *= f.table[row * width + col];
                if p == 0.0 {
                    break;
                }
            }
            *slot = p;
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::WrongTopology(format!(
                "factor product sums to {total}; the mechanisms are cyclic"
            )));
        }
        Ok(CategoricalDist {
            axes: self.axes.clone(),
            probs,
        })
    }
}

pub fn joint_table(model: &CategoricalScm) -> Result<CategoricalDist> {
    joint_table_with_cap(model, STATE_CAP)
}

pub fn joint_table_with_cap(model: &CategoricalScm, cap: usize) -> Result<CategoricalDist> {
    FactorModel::from_scm(model)?.joint(cap)
}

pub fn condition<S: AsRef<str>>(
    dist: &CategoricalDist,
    evidence: &[(S, usize)],
) -> Result<CategoricalDist> {
    dist.condition(evidence)
}

/// Post-intervention joint with the mechanism of `node` replaced by a
/// parentless draw from `replacement`.
pub fn intervene_discrete(
    model: &CategoricalScm,
    node: &str,
    replacement: &CategoricalDist,
) -> Result<CategoricalDist> {
    let mut fm = FactorModel::from_scm(model)?;
    let i = fm.axis_index(node)?;
    if replacement.axes.len() != 1 || replacement.axes[0] != fm.axes[i] {
        return Err(Error::DimensionMismatch(format!(
            "replacement axes do not match node `{node}`"
        )));
    }
    fm.replace(&[i], &[], replacement.probs.clone())?;
    fm.joint(STATE_CAP)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn coins() -> CategoricalScm {
        let mut m = CategoricalScm::new();
        m.add_node("X", vec![2]).add_node("Z", vec![2]);
        m.set_cpt("X", vec![0.5, 0.5]).unwrap();
        m.set_cpt("Z", vec![0.5, 0.5]).unwrap();
        m
    }

    fn copy_model() -> CategoricalScm {
        let mut m = CategoricalScm::new();
        m.add_node("Z", vec![2])
            .add_node("X", vec![2])
            .add_edge("Z", "X");
        m.set_cpt("Z", vec![0.3, 0.7]).unwrap();
        m.set_cpt("X", vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        m
    }

    #[test]
    fn independent_coins_are_uniform() {
        let j = joint_table(&coins()).unwrap();
        assert_eq!(j.probs, vec![0.25; 4]);
    }

    #[test]
    fn copy_model_is_diagonal() {
        let j = joint_table(&copy_model()).unwrap();
        assert_eq!(j.probs, vec![0.3, 0.0, 0.0, 0.7]);
        let c = condition(&j, &[("Z", 1)]).unwrap();
        assert_eq!(c.probs, vec![0.0, 1.0]);
    }

    #[test]
    fn conditioning_uniform_joint_leaves_uniform_marginal() {
        let j = joint_table(&coins()).unwrap();
        let c = j.condition(&[("X", 0)]).unwrap();
        assert_eq!(c.labels(), vec!["Z".to_string()]);
        assert_eq!(c.probs, vec![0.5, 0.5]);
    }

    #[test]
    fn zero_probability_evidence() {
        let j = joint_table(&copy_model()).unwrap();
        assert!(matches!(
            j.condition(&[("Z", 0), ("X", 1)]),
            Err(Error::ZeroProbability(_))
        ));
    }

    #[test]
    fn state_cap_is_enforced() {
        let mut m = CategoricalScm::new();
        for i in 0..8 {
            m.add_node(&format!("V{i}"), vec![10]);
            m.set_cpt(&format!("V{i}"), vec![0.1; 10]).unwrap();
        }
        assert!(matches!(
            joint_table(&m),
            Err(Error::StateSpaceTooLarge {
                states: 100_000_000,
                ..
            })
        ));
    }

    #[test]
    fn point_mass_intervention_is_truncated_product() {
        let m = copy_model();
        let rep = CategoricalDist::point_mass(vec![Axis::new("X", 2)], &[0]).unwrap();
        let j = intervene_discrete(&m, "X", &rep).unwrap();
        // P(z) * 1[x=0]
        assert_eq!(j.probs, vec![0.3, 0.0, 0.7, 0.0]);
    }

    #[test]
    fn mismatched_replacement_is_rejected() {
        let rep = CategoricalDist::uniform(vec![Axis::new("X", 3)]);
        assert!(intervene_discrete(&copy_model(), "X", &rep).is_err());
    }

    #[test]
    fn freezing_a_parent_slices_the_child_table() {
        let mut fm = FactorModel::from_scm(&copy_model()).unwrap();
        fm.freeze_outgoing(0, 1);
        let j = fm.joint(STATE_CAP).unwrap();
        // X copies the frozen Z=1 while Z keeps its marginal.
        assert_eq!(j.probs, vec![0.0, 0.3, 0.0, 0.7]);
    }

    #[test]
    fn mixed_radix_round_trip() {
        let cards = [2, 3, 4];
        for s in 0..24 {
            assert_eq!(flat_index(&cards, &digits_of(&cards, s)), s);
        }
        assert_eq!(digits_of(&cards, 5), vec![0, 1, 1]);
    }
}
