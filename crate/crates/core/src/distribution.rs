//! Distribution values shared by both engines.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::discrete::CategoricalDist;
use crate::error::{Error, Result};
use crate::gaussian::GaussianDist;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Distribution {
    Gaussian(GaussianDist),
    Categorical(CategoricalDist),
}

/// A value of a macro variable: a real for sum/mean aggregations, a
/// category index for discrete ones.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MacroValue {
    Category(usize),
    Real(f64),
}

impl From<f64> for MacroValue {
    fn from(v: f64) -> Self {
        MacroValue::Real(v)
    }
}

impl From<usize> for MacroValue {
    fn from(v: usize) -> Self {
        MacroValue::Category(v)
    }
}

impl MacroValue {
    pub fn as_real(self) -> f64 {
        match self {
            MacroValue::Real(v) => v,
            MacroValue::Category(c) => c as f64,
        }
    }

    pub fn as_category(self) -> Result<usize> {
        match self {
            MacroValue::Category(c) => Ok(c),
            MacroValue::Real(v) if v >= 0.0 && v.fract() == 0.0 => Ok(v as usize),
            MacroValue::Real(v) => Err(Error::InadmissibleGrid(format!("{v} is not a category"))),
        }
    }
}

impl fmt::Display for MacroValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MacroValue::Real(v) => write!(f, "{v}"),
            MacroValue::Category(c) => write!(f, "{c}"),
        }
    }
}

impl Distribution {
    pub fn labels(&self) -> Vec<String> {
        match self {
            Distribution::Gaussian(g) => g.labels.clone(),
            Distribution::Categorical(c) => c.labels(),
        }
    }

    pub fn marginal<S: AsRef<str>>(&self, labels: &[S]) -> Result<Distribution> {
        Ok(match self {
            Distribution::Gaussian(g) => Distribution::Gaussian(g.marginal(labels)?),
            Distribution::Categorical(c) => Distribution::Categorical(c.marginal(labels)?),
        })
    }

    /// Condition on macro or micro labels taking the given values.
    pub fn condition<S: AsRef<str>>(&self, evidence: &[(S, MacroValue)]) -> Result<Distribution> {
        Ok(match self {
            Distribution::Gaussian(g) => {
                let labels: Vec<&str> = evidence.iter().map(|(l, _)| l.as_ref()).collect();
                let values: Vec<f64> = evidence.iter().map(|(_, v)| v.as_real()).collect();
                Distribution::Gaussian(g.condition_on_labels(&labels, &values)?)
            }
            Distribution::Categorical(c) => {
                let ev: Vec<(&str, usize)> = evidence
                    .iter()
                    .map(|(l, v)| Ok((l.as_ref(), v.as_category()?)))
                    .collect::<Result<_>>()?;
                Distribution::Categorical(c.condition(&ev)?)
            }
        })
    }

    /// Gaussian: max of relative mean gap and entrywise covariance gap.
    /// Categorical: total variation.
    pub fn discrepancy(&self, other: &Distribution) -> Result<f64> {
        match (self, other) {
            (Distribution::Gaussian(a), Distribution::Gaussian(b)) => a.discrepancy(b),
            (Distribution::Categorical(a), Distribution::Categorical(b)) => a.tv_distance(b),
            _ => Err(Error::WrongFamily(
                "comparing distributions of different families".into(),
            )),
        }
    }

    pub fn is_degenerate(&self, tol: f64) -> bool {
        match self {
            Distribution::Gaussian(g) => g.is_degenerate(tol),
            Distribution::Categorical(c) => c.is_degenerate(tol),
        }
    }

    pub fn as_gaussian(&self) -> Result<&GaussianDist> {
        match self {
            Distribution::Gaussian(g) => Ok(g),
            Distribution::Categorical(_) => Err(Error::WrongFamily(
                "expected a Gaussian distribution".into(),
            )),
        }
    }

    pub fn as_categorical(&self) -> Result<&CategoricalDist> {
        match self {
            Distribution::Categorical(c) => Ok(c),
            Distribution::Gaussian(_) => Err(Error::WrongFamily(
                "expected a categorical distribution".into(),
            )),
        }
    }
}
