//! Micro-level structural causal models in two exactly solvable families.
//!
//! Both families store nodes in a topological order chosen by the caller.
//! Constructors never reject a model; [`Scm::validate`] reports every broken
//! invariant as data and the engines refuse to run on an invalid model.

use std::collections::BTreeSet;
use std::fmt;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::aggregation::AggregationSpec;
use crate::error::{Error, Result};
use crate::graph::Dag;
use crate::linalg;

/// Tolerance on CPT row sums.
pub const CPT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VarKind {
    Micro,
    Macro,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct VariableId {
    pub name: String,
    pub kind: VarKind,
}

impl VariableId {
    pub fn micro(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            kind: VarKind::Micro,
        }
    }

    pub fn macro_var(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            kind: VarKind::Macro,
        }
    }
}

impl fmt::Display for VariableId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Domain {
    Real,
    /// Cardinality of every component.
    Categorical(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeSpec {
    pub id: VariableId,
    pub dim: usize,
    pub domain: Domain,
}

impl NodeSpec {
    pub fn real(name: impl Into<String>, dim: usize) -> Self {
        Self {
            id: VariableId::micro(name),
            dim,
            domain: Domain::Real,
        }
    }

    pub fn categorical(name: impl Into<String>, cardinalities: Vec<usize>) -> Self {
        Self {
            id: VariableId::micro(name),
            dim: cardinalities.len(),
            domain: Domain::Categorical(cardinalities),
        }
    }

    pub fn name(&self) -> &str {
        &self.id.name
    }

    /// Number of joint states of a categorical node (mixed radix, last
    /// component fastest); 0 for real nodes.
    pub fn states(&self) -> usize {
        match &self.domain {
            Domain::Real => 0,
            Domain::Categorical(c) => c.iter().product(),
        }
    }

    /// Labels of the individual components: the bare name for scalar nodes,
    /// `name[i]` otherwise.
    pub fn component_labels(&self) -> Vec<String> {
        if self.dim == 1 {
            vec![self.id.name.clone()]
        } else {
            (0..self.dim)
                .map(|i| format!("{}[{}]", self.id.name, i))
                .collect()
        }
    }

    /// Split a joint categorical state into per-component categories.
    pub fn decode_state(&self, mut state: usize) -> Vec<usize> {
        let cards = match &self.domain {
            Domain::Categorical(c) => c,
            Domain::Real => return Vec::new(),
        };
        let mut out = vec![0; cards.len()];
        for k in (0..cards.len()).rev() {
            out[k] = state % cards[k];
            state /= cards[k];
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearEdge {
    pub from: String,
    pub to: String,
    /// `child.dim × parent.dim`.
    pub coeff: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianNoise {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

/// `X_j := Σ_{p ∈ PA_j} B_{jp} X_p + U_j` with independent `U_j ~ N(μ_j, Σ_j)`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LinearGaussianScm {
    nodes: Vec<NodeSpec>,
    edges: Vec<LinearEdge>,
    noise: Vec<GaussianNoise>,
}

impl LinearGaussianScm {
    pub fn new() -> Self {
        Self::default()
    }

    /// Append a node with Gaussian noise; the covariance is symmetrized.
    pub fn add_node(&mut self, name: &str, mean: Vec<f64>, cov: DMatrix<f64>) -> &mut Self {
        let dim = mean.len();
        self.nodes.push(NodeSpec::real(name, dim));
        self.noise.push(GaussianNoise {
            mean: DVector::from_vec(mean),
            cov: linalg::symmetrize(&cov),
        });
        self
    }

    /// Node with independent components: `N(mean, diag(variances))`.
    pub fn add_independent_node(
        &mut self,
        name: &str,
        mean: Vec<f64>,
        variances: Vec<f64>,
    ) -> &mut Self {
        let cov = DMatrix::from_diagonal(&DVector::from_vec(variances));
        self.add_node(name, mean, cov)
    }

    pub fn add_edge(&mut self, from: &str, to: &str, coeff: DMatrix<f64>) -> &mut Self {
        self.edges.push(LinearEdge {
            from: from.to_string(),
            to: to.to_string(),
            coeff,
        });
        self
    }

    pub fn nodes(&self) -> &[NodeSpec] {
        &self.nodes
    }

    pub fn edges(&self) -> &[LinearEdge] {
        &self.edges
    }

    pub fn noise(&self) -> &[GaussianNoise] {
        &self.noise
    }

    pub fn node_index(&self, name: &str) -> Result<usize> {
        self.nodes
            .iter()
            .position(|n| n.name() == name)
            .ok_or_else(|| Error::UnknownVariable(name.to_string()))
    }

    pub fn total_dim(&self) -> usize {
        self.nodes.iter().map(|n| n.dim).sum()
    }

    /// Start offset of each node's block in the stacked component vector.
    pub fn offsets(&self) -> Vec<usize> {
        let mut acc = 0;
        self.nodes
            .iter()
            .map(|n| {
                let o = acc;
                acc += n.dim;
                o
            })
            .collect()
    }

    pub fn component_labels(&self) -> Vec<String> {
        self.nodes
            .iter()
            .flat_map(|n| n.component_labels())
            .collect()
    }

    pub fn coefficient(&self, from: &str, to: &str) -> Option<&DMatrix<f64>> {
        self.edges
            .iter()
            .find(|e| e.from == from && e.to == to)
            .map(|e| &e.coeff)
    }

    pub fn validate(&self) -> Vec<Violation> {
        let mut out = common_violations(&self.nodes, &self.edge_names());
        for node in &self.nodes {
            if node.domain != Domain::Real {
                out.push(Violation::new(
                    &[node.name()],
                    ViolationKind::DomainMismatch,
                ));
            }
        }
        for e in &self.edges {
            let (Ok(f), Ok(t)) = (self.node_index(&e.from), self.node_index(&e.to)) else {
                continue;
            };
            let want = (self.nodes[t].dim, self.nodes[f].dim);
            let got = (e.coeff.nrows(), e.coeff.ncols());
            if want != got {
                out.push(Violation::new(
                    &[&e.from, &e.to],
                    ViolationKind::CoeffShape {
                        expected: want,
                        found: got,
                    },
                ));
            }
        }
        for (node, noise) in self.nodes.iter().zip(&self.noise) {
            let d = node.dim;
            if noise.mean.len() != d || noise.cov.nrows() != d || noise.cov.ncols() != d {
                out.push(Violation::new(&[node.name()], ViolationKind::NoiseShape));
                continue;
            }
            let asym = linalg::max_asymmetry(&noise.cov);
            if asym > linalg::PSD_TOL {
                out.push(Violation::new(
                    &[node.name()],
                    ViolationKind::CovAsymmetric(asym),
                ));
            }
            let min_eig = linalg::min_eigenvalue(&noise.cov);
            if min_eig < -linalg::PSD_TOL {
                out.push(Violation::new(
                    &[node.name()],
                    ViolationKind::CovNotPsd(min_eig),
                ));
            }
            if noise
                .mean
                .iter()
                .chain(noise.cov.iter())
                .any(|v| !v.is_finite())
            {
                out.push(Violation::new(&[node.name()], ViolationKind::NonFinite));
            }
        }
        out
    }

    fn edge_names(&self) -> Vec<(String, String)> {
        self.edges
            .iter()
            .map(|e| (e.from.clone(), e.to.clone()))
            .collect()
    }
}

/// Finite categorical SCM: one conditional probability table per node.
///
/// The CPT of a node is row-major over the joint configuration of its parents
/// (parents taken in node order, mixed radix, last parent fastest); each row
/// has one entry per joint state of the node.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CategoricalScm {
    nodes: Vec<NodeSpec>,
    edges: Vec<(String, String)>,
    cpts: Vec<Vec<f64>>,
}

impl CategoricalScm {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_node(&mut self, name: &str, cardinalities: Vec<usize>) -> &mut Self {
        self.nodes.push(NodeSpec::categorical(name, cardinalities));
        self.cpts.push(Vec::new());
        self
    }

    pub fn add_edge(&mut self, from: &str, to: &str) -> &mut Self {
        self.edges.push((from.to_string(), to.to_string()));
        self
    }

    pub fn set_cpt(&mut self, name: &str, probs: Vec<f64>) -> Result<&mut Self> {
        let i = self.node_index(name)?;
        self.cpts[i] = probs;
        Ok(self)
    }

    pub fn nodes(&self) -> &[NodeSpec] {
        &self.nodes
    }

    pub fn edges(&self) -> &[(String, String)] {
        &self.edges
    }

    pub fn cpt(&self, i: usize) -> &[f64] {
        &self.cpts[i]
    }

    pub fn node_index(&self, name: &str) -> Result<usize> {
        self.nodes
            .iter()
            .position(|n| n.name() == name)
            .ok_or_else(|| Error::UnknownVariable(name.to_string()))
    }

    /// Parents of node `i` in node order. Unknown edge endpoints are skipped.
    pub fn parents(&self, i: usize) -> Vec<usize> {
        let name = self.nodes[i].name();
        let mut ps: Vec<usize> = self
            .edges
            .iter()
            .filter(|(_, to)| to == name)
            .filter_map(|(from, _)| self.node_index(from).ok())
            .collect();
        ps.sort_unstable();
        ps.dedup();
        ps
    }

    pub fn states(&self, i: usize) -> usize {
        self.nodes[i].states()
    }

    pub fn validate(&self) -> Vec<Violation> {
        let mut out = common_violations(&self.nodes, &self.edges);
        for (i, node) in self.nodes.iter().enumerate() {
            if !matches!(node.domain, Domain::Categorical(_)) {
                out.push(Violation::new(
                    &[node.name()],
                    ViolationKind::DomainMismatch,
                ));
                continue;
            }
            let rows: usize = self
                .parents(i)
                .iter()
                .map(|&p| self.states(p).max(1))
                .product();
            let width = node.states();
            let cpt = &self.cpts[i];
            if width == 0 || cpt.len() != rows * width {
                out.push(Violation::new(
                    &[node.name()],
                    ViolationKind::CptShape {
                        expected: rows * width,
                        found: cpt.len(),
                    },
                ));
                continue;
            }
            for (r, row) in cpt.chunks(width).enumerate() {
                if row.iter().any(|p| !p.is_finite() || *p < 0.0) {
                    out.push(Violation::new(
                        &[node.name()],
                        ViolationKind::CptNegative { row: r },
                    ));
                }
                let sum: f64 = row.iter().sum();
                if (sum - 1.0).abs() > CPT_TOL {
                    out.push(Violation::new(
                        &[node.name()],
                        ViolationKind::CptNormalization { row: r, sum },
                    ));
                }
            }
        }
        out
    }
}

/// A micro model from either exactly solvable family.
#[derive(Debug, Clone, PartialEq)]
pub enum Scm {
    LinearGaussian(LinearGaussianScm),
    Categorical(CategoricalScm),
}

impl From<LinearGaussianScm> for Scm {
    fn from(m: LinearGaussianScm) -> Self {
        Scm::LinearGaussian(m)
    }
}

impl From<CategoricalScm> for Scm {
    fn from(m: CategoricalScm) -> Self {
        Scm::Categorical(m)
    }
}

impl Scm {
    pub fn nodes(&self) -> &[NodeSpec] {
        match self {
            Scm::LinearGaussian(m) => m.nodes(),
            Scm::Categorical(m) => m.nodes(),
        }
    }

    pub fn node_index(&self, name: &str) -> Result<usize> {
        match self {
            Scm::LinearGaussian(m) => m.node_index(name),
            Scm::Categorical(m) => m.node_index(name),
        }
    }

    pub fn edge_names(&self) -> Vec<(String, String)> {
        match self {
            Scm::LinearGaussian(m) => m.edge_names(),
            Scm::Categorical(m) => m.edges.clone(),
        }
    }

    pub fn family(&self) -> &'static str {
        match self {
            Scm::LinearGaussian(_) => "linear_gaussian",
            Scm::Categorical(_) => "categorical",
        }
    }

    /// The micro DAG. Fails only on edges naming unknown nodes.
    pub fn dag(&self) -> Result<Dag> {
        let names: Vec<String> = self.nodes().iter().map(|n| n.name().to_string()).collect();
        Dag::from_edges(&names, &self.edge_names())
    }

    pub fn validate(&self) -> Vec<Violation> {
        match self {
            Scm::LinearGaussian(m) => m.validate(),
            Scm::Categorical(m) => m.validate(),
        }
    }

    pub fn ensure_valid(&self) -> Result<()> {
        let v = self.validate();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidModel(v))
        }
    }

    pub fn as_linear(&self) -> Result<&LinearGaussianScm> {
        match self {
            Scm::LinearGaussian(m) => Ok(m),
            Scm::Categorical(_) => Err(Error::WrongFamily(
                "expected a linear-Gaussian model".into(),
            )),
        }
    }

    pub fn as_categorical(&self) -> Result<&CategoricalScm> {
        match self {
            Scm::Categorical(m) => Ok(m),
            Scm::LinearGaussian(_) => {
                Err(Error::WrongFamily("expected a categorical model".into()))
            }
        }
    }
}

/// Pure function of the model value: empty iff every invariant holds.
pub fn validate_scm(model: &Scm) -> Vec<Violation> {
    model.validate()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub nodes: Vec<String>,
    pub kind: ViolationKind,
}

impl Violation {
    fn new(nodes: &[&str], kind: ViolationKind) -> Self {
        Self {
            nodes: nodes.iter().map(|s| s.to_string()).collect(),
            kind,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ViolationKind {
    DuplicateName,
    ZeroDimension,
    Cardinality,
    UnknownEndpoint(String),
    Acyclicity,
    /// Edge that points backwards in the stored topological order.
    Order,
    DomainMismatch,
    CoeffShape {
        expected: (usize, usize),
        found: (usize, usize),
    },
    NoiseShape,
    CovAsymmetric(f64),
    CovNotPsd(f64),
    NonFinite,
    CptShape {
        expected: usize,
        found: usize,
    },
    CptNegative {
        row: usize,
    },
    CptNormalization {
        row: usize,
        sum: f64,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let at = self.nodes.join(",");
        match &self.kind {
            ViolationKind::DuplicateName => write!(f, "duplicate node name at {{{at}}}"),
            ViolationKind::ZeroDimension => write!(f, "zero dimension at {{{at}}}"),
            ViolationKind::Cardinality => write!(f, "cardinality below 2 at {{{at}}}"),
            ViolationKind::UnknownEndpoint(n) => {
                write!(f, "edge at {{{at}}} names unknown node `{n}`")
            }
            ViolationKind::Acyclicity => write!(f, "acyclicity violation at {{{at}}}"),
            ViolationKind::Order => {
                write!(f, "edge {{{at}}} contradicts the stored topological order")
            }
            ViolationKind::DomainMismatch => {
                write!(f, "node domain does not match the model family at {{{at}}}")
            }
            ViolationKind::CoeffShape { expected, found } => write!(
                f,
                "coefficient shape at {{{at}}}: expected {}x{}, found {}x{}",
                expected.0, expected.1, found.0, found.1
            ),
            ViolationKind::NoiseShape => {
                write!(f, "noise mean/covariance shape mismatch at {{{at}}}")
            }
            ViolationKind::CovAsymmetric(a) => {
                write!(f, "noise covariance asymmetric by {a:e} at {{{at}}}")
            }
            ViolationKind::CovNotPsd(l) => {
                write!(f, "noise covariance has eigenvalue {l:e} at {{{at}}}")
            }
            ViolationKind::NonFinite => write!(f, "non-finite noise parameter at {{{at}}}"),
            ViolationKind::CptShape { expected, found } => {
                write!(
                    f,
                    "CPT at {{{at}}} has {found} entries, expected {expected}"
                )
            }
            ViolationKind::CptNegative { row } => {
                write!(f, "negative or non-finite CPT entry at {{{at}}} row {row}")
            }
            ViolationKind::CptNormalization { row, sum } => {
                write!(
                    f,
                    "normalization violation at {{{at}}} row {row} (sum {sum})"
                )
            }
        }
    }
}

fn common_violations(nodes: &[NodeSpec], edges: &[(String, String)]) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut seen = BTreeSet::new();
    for n in nodes {
        if !seen.insert(n.name()) {
            out.push(Violation::new(&[n.name()], ViolationKind::DuplicateName));
        }
        if n.dim == 0 {
            out.push(Violation::new(&[n.name()], ViolationKind::ZeroDimension));
        }
        if let Domain::Categorical(c) = &n.domain {
            if c.len() != n.dim || c.iter().any(|&k| k < 2) {
                out.push(Violation::new(&[n.name()], ViolationKind::Cardinality));
            }
        }
    }
    let names: Vec<String> = nodes.iter().map(|n| n.name().to_string()).collect();
    let mut known = Vec::new();
    for (a, b) in edges {
        let mut ok = true;
        for end in [a, b] {
            if !names.contains(end) {
                out.push(Violation::new(
                    &[a, b],
                    ViolationKind::UnknownEndpoint(end.clone()),
                ));
                ok = false;
            }
        }
        if ok {
            known.push((a.clone(), b.clone()));
        }
    }
    let dag = Dag::from_edges(&names, &known).expect("endpoints filtered");
    let cyc = dag.cycle_nodes();
    if !cyc.is_empty() {
        let at: Vec<&str> = cyc.iter().map(|&i| names[i].as_str()).collect();
        out.push(Violation::new(&at, ViolationKind::Acyclicity));
    }
    for (a, b) in dag.respects_order() {
        if !(cyc.contains(&a) && cyc.contains(&b)) {
            out.push(Violation::new(
                &[&names[a], &names[b]],
                ViolationKind::Order,
            ));
        }
    }
    out
}

/// Outcome of the no-directed-path check for one aggregation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Assumption1Certificate {
    pub node: VariableId,
    pub holds: bool,
}

/// Whether the nodes grouped by `agg` are free of directed paths between
/// each other. Components inside a single node are treated as causally
/// unordered, so a one-node aggregation always holds.
pub fn check_assumption1(model: &Scm, agg: &AggregationSpec) -> Result<Assumption1Certificate> {
    let dag = model.dag()?;
    let idx: Vec<usize> = agg
        .nodes
        .iter()
        .map(|n| model.node_index(n))
        .collect::<Result<_>>()?;
    let holds = idx
        .iter()
        .all(|&a| idx.iter().all(|&b| a == b || !dag.has_path(a, b)));
    Ok(Assumption1Certificate {
        node: VariableId::macro_var(agg.macro_id.clone()),
        holds,
    })
}

/// Ancestral samples, one row per draw.
#[derive(Debug, Clone, PartialEq)]
pub struct Samples {
    pub labels: Vec<String>,
    /// `n × total micro dimension`; categorical entries are category indices.
    pub data: DMatrix<f64>,
}

impl Samples {
    pub fn column(&self, label: &str) -> Result<Vec<f64>> {
        let j = self
            .labels
            .iter()
            .position(|l| l == label)
            .ok_or_else(|| Error::UnknownVariable(label.to_string()))?;
        Ok(self.data.column(j).iter().copied().collect())
    }
}

/// Ancestral sampling driven by a ChaCha8 stream seeded with `seed`; the
/// output is bit-identical for a given `(model, n, seed)`.
pub fn sample(model: &Scm, n: usize, seed: u64) -> Result<Samples> {
    model.ensure_valid()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match model {
        Scm::LinearGaussian(m) => Ok(sample_linear(m, n, &mut rng)),
        Scm::Categorical(m) => Ok(sample_categorical(m, n, &mut rng)),
    }
}

fn sample_linear(m: &LinearGaussianScm, n: usize, rng: &mut ChaCha8Rng) -> Samples {
    let labels = m.component_labels();
    let d = labels.len();
    let offsets = m.offsets();
    let factors: Vec<DMatrix<f64>> = m.noise.iter().map(|z| linalg::psd_factor(&z.cov)).collect();
    let incoming: Vec<Vec<(usize, &DMatrix<f64>)>> = (0..m.nodes.len())
        .map(|i| {
            m.edges
                .iter()
                .filter(|e| e.to == m.nodes[i].name())
                .map(|e| (m.node_index(&e.from).expect("validated"), &e.coeff))
                .collect()
        })
        .collect();
    let mut data = DMatrix::zeros(n, d);
    let mut row = DVector::zeros(d);
    for r in 0..n {
        for (i, node) in m.nodes.iter().enumerate() {
            let dim = node.dim;
            let z = DVector::from_fn(dim, |_, _| rng.sample::<f64, _>(StandardNormal));
            let mut value = &m.noise[i].mean + &factors[i] * z;
            for (p, coeff) in &incoming[i] {
                let pv = row.rows(offsets[*p], m.nodes[*p].dim);
                value += *coeff * pv;
            }
            row.rows_mut(offsets[i], dim).copy_from(&value);
        }
        data.row_mut(r).copy_from(&row.transpose());
    }
    Samples { labels, data }
}

fn sample_categorical(m: &CategoricalScm, n: usize, rng: &mut ChaCha8Rng) -> Samples {
    let labels: Vec<String> = m.nodes.iter().flat_map(|x| x.component_labels()).collect();
    let d = labels.len();
    let parents: Vec<Vec<usize>> = (0..m.nodes.len()).map(|i| m.parents(i)).collect();
    let mut data = DMatrix::zeros(n, d);
    let mut state = vec![0usize; m.nodes.len()];
    for r in 0..n {
        let mut col = 0;
        for (i, node) in m.nodes.iter().enumerate() {
            let width = node.states();
            let mut row = 0;
            for &p in &parents[i] {
                row = row * m.states(p) + state[p];
            }
            let probs = &m.cpts[i][row * width..(row + 1) * width];
            let u: f64 = rng.random();
            let mut acc = 0.0;
            let mut pick = width - 1;
            for (k, p) in probs.iter().enumerate() {
                acc += p;
                if u < acc {
                    pick = k;
                    break;
                }
            }
            state[i] = pick;
            for c in node.decode_state(pick) {
                data[(r, col)] = c as f64;
                col += 1;
            }
        }
    }
    Samples { labels, data }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aggregation::AggregationKind;

    fn chain() -> LinearGaussianScm {
        let mut m = LinearGaussianScm::new();
        m.add_independent_node("X", vec![0.0], vec![1.0])
            .add_independent_node("Y", vec![0.0], vec![1.0])
            .add_edge("X", "Y", DMatrix::identity(1, 1));
        m
    }

    #[test]
    fn well_formed_chain_has_no_violations() {
        assert!(validate_scm(&chain().into()).is_empty());
    }

    #[test]
    fn two_cycle_is_reported_at_both_nodes() {
        let mut m = chain();
        m.add_edge("Y", "X", DMatrix::identity(1, 1));
        let v = validate_scm(&m.into());
        let cyc: Vec<_> = v
            .iter()
            .filter(|x| x.kind == ViolationKind::Acyclicity)
            .collect();
        assert_eq!(cyc.len(), 1);
        assert_eq!(cyc[0].nodes, vec!["X".to_string(), "Y".to_string()]);
    }

    #[test]
    fn backwards_edge_in_an_acyclic_graph_is_an_order_violation() {
        let mut m = LinearGaussianScm::new();
        m.add_independent_node("Y", vec![0.0], vec![1.0])
            .add_independent_node("X", vec![0.0], vec![1.0])
            .add_edge("X", "Y", DMatrix::identity(1, 1));
        let v = m.validate();
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].kind, ViolationKind::Order);
    }

    #[test]
    fn cpt_row_summing_to_point_nine_is_flagged() {
        let mut m = CategoricalScm::new();
        m.add_node("X", vec![2]);
        m.set_cpt("X", vec![0.5, 0.4]).unwrap();
        let v = m.validate();
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].nodes, vec!["X".to_string()]);
        assert!(matches!(
            v[0].kind,
            ViolationKind::CptNormalization { row: 0, .. }
        ));
    }

    #[test]
    fn coefficient_shape_and_psd_are_checked() {
        let mut m = LinearGaussianScm::new();
        m.add_node(
            "X",
            vec![0.0, 0.0],
            DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]),
        )
        .add_independent_node("Y", vec![0.0], vec![1.0])
        .add_edge("X", "Y", DMatrix::identity(1, 1));
        let kinds: Vec<_> = m.validate().into_iter().map(|v| v.kind).collect();
        assert!(kinds
            .iter()
            .any(|k| matches!(k, ViolationKind::CovNotPsd(_))));
        assert!(kinds
            .iter()
            .any(|k| matches!(k, ViolationKind::CoeffShape { .. })));
    }

    #[test]
    fn validation_is_pure() {
        let mut m = chain();
        m.add_edge("Y", "X", DMatrix::identity(1, 1));
        let s: Scm = m.into();
        assert_eq!(validate_scm(&s), validate_scm(&s));
    }

    #[test]
    fn assumption1_detects_direct_path_between_grouped_nodes() {
        let mut m = LinearGaussianScm::new();
        m.add_independent_node("X1", vec![0.0], vec![1.0])
            .add_independent_node("X2", vec![0.0], vec![1.0])
            .add_edge("X1", "X2", DMatrix::identity(1, 1));
        let agg = AggregationSpec::new(&["X1", "X2"], AggregationKind::Sum, "Xbar");
        assert!(!check_assumption1(&m.clone().into(), &agg).unwrap().holds);

        let mut free = LinearGaussianScm::new();
        free.add_independent_node("X1", vec![0.0], vec![1.0])
            .add_independent_node("X2", vec![0.0], vec![1.0]);
        assert!(check_assumption1(&free.into(), &agg).unwrap().holds);
    }

    #[test]
    fn assumption1_unknown_node_is_an_error() {
        let agg = AggregationSpec::new(&["Q"], AggregationKind::Sum, "Qbar");
        assert!(check_assumption1(&chain().into(), &agg).is_err());
    }

    #[test]
    fn zero_samples_gives_empty_matrix_with_labels() {
        let s = sample(&chain().into(), 0, 7).unwrap();
        assert_eq!(s.data.nrows(), 0);
        assert_eq!(s.labels, vec!["X", "Y"]);
    }

    #[test]
    fn sampling_is_bit_identical_for_a_seed() {
        let m: Scm = chain().into();
        let a = sample(&m, 100, 42).unwrap();
        let b = sample(&m, 100, 42).unwrap();
        assert_eq!(a, b);
        let c = sample(&m, 100, 43).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn invalid_model_refuses_to_sample() {
        let mut m = chain();
        m.add_edge("Y", "X", DMatrix::identity(1, 1));
        assert!(matches!(
            sample(&m.into(), 1, 0),
            Err(Error::InvalidModel(_))
        ));
    }

    #[test]
    fn decode_state_is_mixed_radix_last_fastest() {
        let n = NodeSpec::categorical("X", vec![2, 3]);
        assert_eq!(n.states(), 6);
        assert_eq!(n.decode_state(4), vec![1, 1]);
        assert_eq!(n.decode_state(5), vec![1, 2]);
    }
}
