//! Learn effective radial potentials from one-electron densities.
//!
//! A density ρ(r) defines the proxy amplitude |φ| = √(ρ/c) and the kinetic
//! ratio q(r) = −½∇²|φ|/|φ|. A small tanh network U_θ(r) is trained so that
//! q + U_θ is constant in r, with one anchor point fixing the additive
//! constant. The [`oracle`] module provides Numerov reference solutions for
//! checking the whole pipeline end to end.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod calculus;
pub mod density;
pub mod error;
pub mod grid;
pub mod model;
pub mod observables;
pub mod oracle;
pub mod trainer;

pub use calculus::{
    fit_spline, integrate_radial, kinetic_ratio, radial_laplacian, KineticRatioField,
    SplineField, Weight,
};
pub use density::{
    amplitude, cusp_exponent, load_density_csv, make_hydrogenic, make_sto_density,
    write_density_csv, AmplitudeProfile, DensityProfile, NaturalOrbital, NaturalOrbitalSet,
    StoTerm,
};
pub use error::{Error, Result};
pub use grid::RadialGrid;
pub use model::{init_params, GradientSet, PotentialModel, ResidualMode};
pub use observables::{
    energy_curve, energy_estimate, energy_report, expectation_t, expectation_v,
    invert_local_potential, rmse_vs_reference, shell_peak_analysis, virial_deviation,
    EnergyCurve, EnergyReport, RadialPotential, ShellPeaks, VirialDeviation,
    DEFAULT_ENERGY_WINDOW,
};
pub use oracle::{
    density_from_solution, numerov_ground_state, round_trip, EigenSolution,
    ReferencePotential, RoundTripReport, RoundTripSetup,
};
pub use trainer::{
    multi_run, train, train_on_field, AdamState, IcPoint, LossBreakdown, TrainConfig,
    TrainReport,
};
