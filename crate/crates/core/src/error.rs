use thiserror::Error;

/// Errors raised by the simulation library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("normal-mode frequency squared is negative ({omega_sq}); doubly unstable supersystems are not supported")]
    NegativeOmegaSquared { omega_sq: f64 },

    #[error("bare system stiffness is negative ({omega_sq}); no real bare frequency exists")]
    NonRealBareFrequency { omega_sq: f64 },

    #[error("propagator block is singular at t = {t} (|D| = {dtilde:e})")]
    SingularAtDivergence { t: f64, dtilde: f64 },

    #[error(
        "closed-form coefficients require an inverted environment and a nonzero system frequency (omega = {omega}, lambda^2 = {lambda_sq})"
    )]
    UnsupportedRegime { omega: f64, lambda_sq: f64 },

    #[error("non-physical covariance: area radicand {radicand:e} is negative")]
    NonPhysical { radicand: f64 },

    #[error("value {value} outside the domain of `{what}`")]
    Domain { what: &'static str, value: f64 },

    #[error("integrator failed at t = {t}: {reason}")]
    StepFailure { t: f64, reason: String },

    #[error("trajectory grids differ: {0}")]
    GridMismatch(String),

    #[error("fit window [{start}, {end}] holds fewer than {needed} whole modulation periods")]
    WindowTooShort { start: f64, end: f64, needed: usize },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_positive(name: &'static str, value: f64) -> Result<()> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter { name, reason: format!("must be finite and > 0, got {value}") })
    }
}

pub(crate) fn check_finite(name: &'static str, value: f64) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter { name, reason: format!("must be finite, got {value}") })
    }
}
