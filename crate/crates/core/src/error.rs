use thiserror::Error;

use crate::model::Violation;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model: {}", format_violations(.0))]
    InvalidModel(Vec<Violation>),

    #[error("unknown variable `{0}`")]
    UnknownVariable(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("zero-variance regressor `{0}`")]
    ZeroVariance(String),

    #[error("evidence has zero probability: {0}")]
    ZeroProbability(String),

    #[error("joint state space of {states} states exceeds the cap of {cap}")]
    StateSpaceTooLarge { states: u128, cap: usize },

    #[error("invalid aggregation: {0}")]
    InvalidAggregation(String),

    #[error("duplicate aggregation on node `{0}`")]
    DuplicateAggregation(String),

    #[error("aggregation `{0}` violates the no-directed-path assumption")]
    Assumption1Violated(String),

    #[error("realization is not supported on the fibre of {target} = {value}: {detail}")]
    SupportViolation {
        target: String,
        value: String,
        detail: String,
    },

    #[error("unsupported model family: {0}")]
    WrongFamily(String),

    #[error("unsupported topology: {0}")]
    WrongTopology(String),

    #[error("inadmissible grid value {0}")]
    InadmissibleGrid(String),

    #[error("hypotheses violated: {0}")]
    Hypotheses(String),

    #[error("degenerate conditional: {0}")]
    Degenerate(String),

    #[error("internal verification failed: {0}")]
    Verification(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("cannot access `{path}`: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

fn format_violations(v: &[Violation]) -> String {
    v.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}
