//! Exact reduced dynamics of a harmonic oscillator coupled to an inverted
//! (or stable, or free) oscillator environment, the coefficients of the
//! equivalent time-local master equation, and the entropy production that
//! follows from both.

// `!(x > 0.0)` is used on purpose so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod cli;
pub mod coefficients;
pub mod error;
pub mod evolution;
pub mod gaussian;
pub mod modes;
pub mod ode;
pub mod propagator;

pub use coefficients::{coeffs, coeffs_closed, coeffs_general, contract, route_deviation, EnvVariance, MECoefficients};
pub use error::{Error, Result};
pub use evolution::{compare_trajectories, run_exact, run_me, InitialState, IntegratorOptions, Trajectory};
pub use gaussian::{Diagnostics, GaussianState, SqueezeSpec};
pub use modes::{derive_modes, params_for, params_from_modes, NormalModes, SupersystemParams};
