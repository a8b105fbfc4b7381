//! Social-distancing game on networks: exact contagion probabilities,
//! equilibrium and social-optimum solvers, a session simulator with bot
//! agents, convergence detection, synthetic cohort generation, and the
//! econometric pipeline.
//!
//! The probability and payoff layers are generic over [`scalar::Scalar`];
//! use the [`Rational`] alias for exact arithmetic and plain `f64` (the
//! [`Scalar64`] alias) everywhere speed matters.

pub mod cohort;
pub mod contagion;
pub mod convergence;
pub mod econ;
pub mod equilibrium;
pub mod error;
pub mod geo;
pub mod graph;
pub mod params;
pub mod scalar;
pub mod session;

pub use error::{Error, Result};

/// Default floating-point scalar.
pub type Scalar64 = f64;
/// Exact rational scalar for knife-edge comparisons.
pub type Rational = num_rational::BigRational;

pub type ParamsF64 = params::GameParams<f64>;
pub type ParamsExact = params::GameParams<Rational>;
