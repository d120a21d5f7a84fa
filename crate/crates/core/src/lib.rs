//! Numerical laboratory for stochastic homogenization of discrete divergence-form
//! operators on the periodic lattice `Z^d / N Z^d`.
//!
//! The modules follow the pipeline: [`lattice`] geometry and fields,
//! [`random_fields`] i.i.d. edge conductivities, [`solver`] for the massive
//! elliptic operator, [`homogenization`] correctors and energy estimates,
//! [`sensitivity`] edge derivatives, [`linearized`] small-ellipticity-contrast
//! theory, and [`experiments`] for configured Monte Carlo runs.

pub mod error;
pub mod experiments;
pub mod fourier;
pub mod homogenization;
pub mod lattice;
pub mod linearized;
pub mod random_fields;
pub mod sensitivity;
pub mod solver;

pub use error::{Error, Result};
pub use experiments::stats::{fit_loglog, McEstimate, ScalingFit};
pub use homogenization::{corrector, estimate_a_lt, CorrectorSolution, EnergyDensityField};
pub use lattice::{AveragingMask, ScalarField, TorusLattice, VectorField};
pub use random_fields::{sample, CoefficientField, CoefficientLaw, LawMoments, SeedLineage};
pub use sensitivity::{EdgeRef, SusceptibilityReport};
pub use solver::{green, solve, Domain, EllipticOperator, SolveReport, DEFAULT_TOL};
