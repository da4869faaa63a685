//! JSON files for models, aggregations and realizations.
//!
//! Model file:
//!
//! ```json
//! {
//!   "family": "linear_gaussian",
//!   "nodes": [{"name": "X", "noise_mean": [10, 20], "noise_cov": [[1, 0], [0, 4]]},
//!             {"name": "Y", "noise_mean": [0, 0], "noise_cov": [[1, 0], [0, 1]]}],
//!   "edges": [{"from": "X", "to": "Y", "coeff": [[2, 0], [0, 5]]}],
//!   "aggregations": [{"nodes": ["X"], "kind": "sum"}, {"nodes": ["Y"], "kind": "sum"}]
//! }
//! ```
//!
//! Categorical nodes carry `cards` and a flat `cpt`; categorical edges have no
//! `coeff`. The `aggregations` key is optional and may also come from a
//! separate file holding the bare array.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::aggregation::{
    AggregationKind, AggregationSpec, DiscreteAggregation, ExplicitRealization, MicroRealization,
    RealizationFamily,
};
use crate::error::{Error, Result};
use crate::gaussian::GaussianDist;
use crate::linalg;
use crate::model::{CategoricalScm, Domain, LinearGaussianScm, Scm};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelFile {
    LinearGaussian {
        nodes: Vec<GaussianNodeJson>,
        #[serde(default)]
        edges: Vec<LinearEdgeJson>,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        aggregations: Vec<AggregationJson>,
    },
    Categorical {
        nodes: Vec<CategoricalNodeJson>,
        #[serde(default)]
        edges: Vec<EdgeJson>,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        aggregations: Vec<AggregationJson>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaussianNodeJson {
    pub name: String,
    pub noise_mean: Vec<f64>,
    pub noise_cov: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinearEdgeJson {
    pub from: String,
    pub to: String,
    /// `child.dim × parent.dim`, row-major.
    pub coeff: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CategoricalNodeJson {
    pub name: String,
    pub cards: Vec<usize>,
    pub cpt: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeJson {
    pub from: String,
    pub to: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AggregationJson {
    pub nodes: Vec<String>,
    pub kind: String,
    /// Defaults to `<first node>bar`.
    #[serde(default, rename = "macro", skip_serializing_if = "Option::is_none")]
    pub macro_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub table: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub macro_card: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum RealizationJson {
    Natural {
        target: String,
    },
    Sequential {
        target: String,
        order: Vec<usize>,
    },
    Deterministic {
        target: String,
        allocation: Vec<f64>,
    },
    GaussianAffine {
        target: String,
        intercept: Vec<f64>,
        slope: Vec<f64>,
        cov: Vec<Vec<f64>>,
    },
    GaussianPoints {
        target: String,
        points: Vec<GaussianPointJson>,
    },
    Categorical {
        target: String,
        table: Vec<Vec<f64>>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaussianPointJson {
    pub xbar: f64,
    pub dist: GaussianDist,
}

/// A parsed model with the aggregations found in the same file.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedModel {
    pub scm: Scm,
    pub aggs: Vec<AggregationSpec>,
}

fn parse_json<T: DeserializeOwned>(text: &str, what: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| {
        Error::Parse(format!(
            "{what}: line {}, column {}: {e}",
            e.line(),
            e.column()
        ))
    })
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

fn matrix(rows: &[Vec<f64>], what: &str) -> Result<nalgebra::DMatrix<f64>> {
    if rows.is_empty() {
        return Ok(nalgebra::DMatrix::zeros(0, 0));
    }
    linalg::from_rows(rows).ok_or_else(|| Error::Parse(format!("{what}: ragged matrix rows")))
}

impl AggregationJson {
    pub fn to_spec(&self) -> Result<AggregationSpec> {
        let first = self
            .nodes
            .first()
            .ok_or_else(|| Error::Parse("aggregation without nodes".into()))?;
        let macro_id = self
            .macro_id
            .clone()
            .unwrap_or_else(|| format!("{first}bar"));
        let kind = match self.kind.as_str() {
            "sum" => AggregationKind::Sum,
            "mean" => AggregationKind::Mean,
            "discrete" => {
                let table = self.table.clone().ok_or_else(|| {
                    Error::Parse(format!("`{macro_id}`: discrete aggregation needs `table`"))
                })?;
                let macro_card = self
                    .macro_card
                    .unwrap_or_else(|| table.iter().max().map_or(0, |m| m + 1));
                AggregationKind::Discrete(DiscreteAggregation { table, macro_card })
            }
            k => return Err(Error::Parse(format!("unknown aggregation kind `{k}`"))),
        };
        Ok(AggregationSpec::new(&self.nodes, kind, &macro_id))
    }

    pub fn from_spec(spec: &AggregationSpec) -> Self {
        let (table, macro_card) = match &spec.kind {
            AggregationKind::Discrete(d) => (Some(d.table.clone()), Some(d.macro_card)),
            _ => (None, None),
        };
        Self {
            nodes: spec.nodes.clone(),
            kind: spec.kind.name().to_string(),
            macro_id: Some(spec.macro_id.clone()),
            table,
            macro_card,
        }
    }
}

impl ModelFile {
    pub fn to_model(&self) -> Result<LoadedModel> {
        let (scm, aggs): (Scm, &[AggregationJson]) = match self {
            ModelFile::LinearGaussian {
                nodes,
                edges,
                aggregations,
            } => {
                let mut m = LinearGaussianScm::new();
                for n in nodes {
                    m.add_node(
                        &n.name,
                        n.noise_mean.clone(),
                        matrix(&n.noise_cov, &n.name)?,
                    );
                }
                for e in edges {
                    m.add_edge(
                        &e.from,
                        &e.to,
                        matrix(&e.coeff, &format!("{} → {}", e.from, e.to))?,
                    );
                }
                (m.into(), aggregations)
            }
            ModelFile::Categorical {
                nodes,
                edges,
                aggregations,
            } => {
                let mut m = CategoricalScm::new();
                for n in nodes {
                    m.add_node(&n.name, n.cards.clone());
                }
                for e in edges {
                    m.add_edge(&e.from, &e.to);
                }
                for n in nodes {
                    m.set_cpt(&n.name, n.cpt.clone())?;
                }
                (m.into(), aggregations)
            }
        };
        scm.ensure_valid()?;
        let aggs = aggs
            .iter()
            .map(AggregationJson::to_spec)
            .collect::<Result<_>>()?;
        Ok(LoadedModel { scm, aggs })
    }

    pub fn from_model(scm: &Scm, aggs: &[AggregationSpec]) -> Self {
        let aggregations = aggs.iter().map(AggregationJson::from_spec).collect();
        match scm {
            Scm::LinearGaussian(m) => ModelFile::LinearGaussian {
                nodes: m
                    .nodes()
                    .iter()
                    .zip(m.noise())
                    .map(|(n, u)| GaussianNodeJson {
                        name: n.name().to_string(),
                        noise_mean: u.mean.iter().copied().collect(),
                        noise_cov: linalg::to_rows(&u.cov),
                    })
                    .collect(),
                edges: m
                    .edges()
                    .iter()
                    .map(|e| LinearEdgeJson {
                        from: e.from.clone(),
                        to: e.to.clone(),
                        coeff: linalg::to_rows(&e.coeff),
                    })
                    .collect(),
                aggregations,
            },
            Scm::Categorical(m) => ModelFile::Categorical {
                nodes: m
                    .nodes()
                    .iter()
                    .enumerate()
                    .map(|(i, n)| CategoricalNodeJson {
                        name: n.name().to_string(),
                        cards: match &n.domain {
                            Domain::Categorical(c) => c.clone(),
                            Domain::Real => Vec::new(),
                        },
                        cpt: m.cpt(i).to_vec(),
                    })
                    .collect(),
                edges: m
                    .edges()
                    .iter()
                    .map(|(a, b)| EdgeJson {
                        from: a.clone(),
                        to: b.clone(),
                    })
                    .collect(),
                aggregations,
            },
        }
    }
}

impl RealizationJson {
    pub fn to_realization(&self) -> Result<MicroRealization> {
        let r = match self {
            RealizationJson::Natural { target } => MicroRealization::natural(target),
            RealizationJson::Sequential { target, order } => {
                MicroRealization::sequential(target, order.clone())
            }
            RealizationJson::Deterministic { target, allocation } => {
                MicroRealization::deterministic(target, allocation.clone())
            }
            RealizationJson::GaussianAffine {
                target,
                intercept,
                slope,
                cov,
            } => MicroRealization::explicit(
                target,
                ExplicitRealization::GaussianAffine {
                    intercept: intercept.clone(),
                    slope: slope.clone(),
                    cov: matrix(cov, "realization covariance")?,
                },
            ),
            RealizationJson::GaussianPoints { target, points } => MicroRealization::explicit(
                target,
                ExplicitRealization::GaussianPoints(
                    points.iter().map(|p| (p.xbar, p.dist.clone())).collect(),
                ),
            ),
            RealizationJson::Categorical { target, table } => MicroRealization::explicit(
                target,
                ExplicitRealization::Categorical {
                    table: table.clone(),
                },
            ),
        };
        Ok(r)
    }

    pub fn from_realization(r: &MicroRealization) -> Self {
        let target = r.target.clone();
        match &r.family {
            RealizationFamily::Natural => RealizationJson::Natural { target },
            RealizationFamily::Sequential { order } => RealizationJson::Sequential {
                target,
                order: order.clone(),
            },
            RealizationFamily::Deterministic { allocation } => RealizationJson::Deterministic {
                target,
                allocation: allocation.clone(),
            },
            RealizationFamily::Explicit(ExplicitRealization::GaussianAffine {
                intercept,
                slope,
                cov,
            }) => RealizationJson::GaussianAffine {
                target,
                intercept: intercept.clone(),
                slope: slope.clone(),
                cov: linalg::to_rows(cov),
            },
            RealizationFamily::Explicit(ExplicitRealization::GaussianPoints(points)) => {
                RealizationJson::GaussianPoints {
                    target,
                    points: points
                        .iter()
                        .map(|(x, d)| GaussianPointJson {
                            xbar: *x,
                            dist: d.clone(),
                        })
                        .collect(),
                }
            }
            RealizationFamily::Explicit(ExplicitRealization::Categorical { table }) => {
                RealizationJson::Categorical {
                    target,
                    table: table.clone(),
                }
            }
        }
    }
}

pub fn parse_model(text: &str) -> Result<LoadedModel> {
    parse_json::<ModelFile>(text, "model")?.to_model()
}

pub fn load_model(path: &Path) -> Result<LoadedModel> {
    parse_json::<ModelFile>(&read(path)?, &path.display().to_string())?.to_model()
}

pub fn model_to_json(scm: &Scm, aggs: &[AggregationSpec]) -> String {
    serde_json::to_string_pretty(&ModelFile::from_model(scm, aggs)).expect("model serializes")
}

/// Accepts a bare array or an object with an `aggregations` key.
pub fn parse_aggregations(text: &str) -> Result<Vec<AggregationSpec>> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum AggFile {
        Bare(Vec<AggregationJson>),
        Wrapped { aggregations: Vec<AggregationJson> },
    }
    let list = match parse_json::<AggFile>(text, "aggregations")? {
        AggFile::Bare(l) | AggFile::Wrapped { aggregations: l } => l,
    };
    list.iter().map(AggregationJson::to_spec).collect()
}

pub fn load_aggregations(path: &Path) -> Result<Vec<AggregationSpec>> {
    parse_aggregations(&read(path)?)
}

pub fn parse_realization(text: &str) -> Result<MicroRealization> {
    parse_json::<RealizationJson>(text, "realization")?.to_realization()
}

pub fn load_realization(path: &Path) -> Result<MicroRealization> {
    parse_json::<RealizationJson>(&read(path)?, &path.display().to_string())?.to_realization()
}

pub fn realization_to_json(r: &MicroRealization) -> String {
    serde_json::to_string_pretty(&RealizationJson::from_realization(r))
        .expect("realization serializes")
}
