//! Exact laboratory for causal aggregation.
//!
//! Micro-level structural causal models (linear-Gaussian or finite
//! categorical) are aggregated into macro variables; interventions on a
//! macro variable are given meaning by a micro-realization, a distribution
//! over micro states that aggregate to the requested value. The crate
//! computes observational and interventional macro distributions exactly,
//! classifies realizations as confounding-inhibiting or -inducing,
//! synthesizes inhibiting realizations, and checks graphical criteria for
//! aggregated DAGs.

pub mod aggregation;
pub mod confounding;
pub mod discrete;
pub mod distribution;
pub mod error;
pub mod gaussian;
pub mod graph;
pub mod graph_criteria;
pub mod io;
pub mod linalg;
pub mod model;
pub mod scenarios;
pub mod synthesis;

pub use aggregation::{
    apply_macro_intervention, build_amalgamated, natural_realization, sequential_realization,
    AggregatedModel, AggregationKind, AggregationSpec, AmalgamatedGraph, DiscreteAggregation,
    ExplicitRealization, MacroInterventionGraph, MicroRealization, RealizationFamily,
};
pub use discrete::{Axis, CategoricalDist};
pub use distribution::{Distribution, MacroValue};
pub use error::{Error, Result};
pub use gaussian::{AffineFunctional, GaussianDist};
pub use model::{validate_scm, CategoricalScm, LinearGaussianScm, Scm};
