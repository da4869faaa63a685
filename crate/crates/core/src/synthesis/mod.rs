//! Constructions of confounding-inhibiting realizations and alternative
//! macro noise coordinates.

pub mod cdf_noise;
pub mod coordinates;
pub mod discrete_kernel;
pub mod gaussian_inhibitor;
pub mod masked;

pub use cdf_noise::{
    average_price_noise, cdf_noise, empirical_cdf_noise, ks_uniform, ks_uniformity,
    reconstruct_on_samples, AveragePriceReport, CdfNoiseModel,
};
pub use coordinates::{
    construct_h, from_delta, macro_noise_covariance, shift_allocation, shift_equivalence_check,
    CoordinateChange, ScalarLinearModel, ShiftEquivalence,
};
pub use discrete_kernel::{discrete_kernel_construction, kernel_conditions, KernelTable};
pub use gaussian_inhibitor::{
    gaussian_inhibitor, synthesize_gaussian_inhibitor, total_effects, GaussianInhibitorProblem,
    InhibitorSolution,
};
pub use masked::{random_masked_spec, theorem2_instance, MaskedInstance, MaskedSpec};
