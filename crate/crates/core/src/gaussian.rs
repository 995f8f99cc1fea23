//! Gaussian states: squeezed pure states, symplectic propagation, reduction to
//! the system and the scalar diagnostics derived from the reduced covariance.

use nalgebra::{DMatrix, DVector, Matrix2, Matrix4};
use serde::{Deserialize, Serialize};

use crate::coefficients::EnvVariance;
use crate::error::{check_finite, Error, Result};

/// Squeezing ratio `r = dx/dp` (natural units) and orientation angle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SqueezeSpec {
    pub r: f64,
    #[serde(default)]
    pub angle: f64,
}

impl SqueezeSpec {
    pub fn new(r: f64, angle: f64) -> Result<Self> {
        let s = Self { r, angle };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        crate::error::check_positive("r", self.r)?;
        check_finite("angle", self.angle)
    }
}

/// Means and second cumulants of a one- or two-mode Gaussian state,
/// ordered `[x, p]` or `[x, p, y, q]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianState {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl GaussianState {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let n = mean.len();
        if !(n == 2 || n == 4) || cov.shape() != (n, n) {
            return Err(Error::InvalidParameter { name: "state", reason: format!("need 2 or 4 dims, got {n}") });
        }
        Ok(Self { mean, cov })
    }

    pub fn n_modes(&self) -> usize {
        self.mean.len() / 2
    }

    pub fn dx2(&self) -> f64 {
        self.cov[(0, 0)]
    }
    pub fn dp2(&self) -> f64 {
        self.cov[(1, 1)]
    }
    pub fn dxp(&self) -> f64 {
        self.cov[(0, 1)]
    }

    /// Environment block of a two-mode state as an [`EnvVariance`].
    pub fn env_variance(&self) -> Option<EnvVariance> {
        (self.n_modes() == 2).then(|| EnvVariance {
            dy2: self.cov[(2, 2)],
            dq2: self.cov[(3, 3)],
            dyq: self.cov[(2, 3)],
            mean_y: self.mean[2],
            mean_q: self.mean[3],
        })
    }
}

/// Pure squeezed state with unit reference mass.
pub fn squeezed_pure(spec: SqueezeSpec, hbar: f64) -> GaussianState {
    squeezed_pure_with_mass(spec, 1.0, hbar)
}

/// Pure squeezed state `R diag(hbar r/(2m), hbar m/(2r)) R^T`.
pub fn squeezed_pure_with_mass(spec: SqueezeSpec, mass: f64, hbar: f64) -> GaussianState {
    let (s, c) = spec.angle.sin_cos();
    let rot = Matrix2::new(c, -s, s, c);
    let d = Matrix2::new(hbar * spec.r / (2.0 * mass), 0.0, 0.0, hbar * mass / (2.0 * spec.r));
    let cov = rot * d * rot.transpose();
    let cov = DMatrix::from_fn(2, 2, |i, j| 0.5 * (cov[(i, j)] + cov[(j, i)]));
    GaussianState { mean: DVector::zeros(2), cov }
}

/// Uncorrelated two-mode state from system and environment factors.
pub fn product_state(sys: &GaussianState, env: &GaussianState) -> Result<GaussianState> {
    if sys.n_modes() != 1 || env.n_modes() != 1 {
        return Err(Error::InvalidParameter { name: "product_state", reason: "both factors must be single-mode".into() });
    }
    let mut mean = DVector::zeros(4);
    mean.rows_mut(0, 2).copy_from(&sys.mean);
    mean.rows_mut(2, 2).copy_from(&env.mean);
    let mut cov = DMatrix::zeros(4, 4);
    cov.view_mut((0, 0), (2, 2)).copy_from(&sys.cov);
    cov.view_mut((2, 2), (2, 2)).copy_from(&env.cov);
    Ok(GaussianState { mean, cov })
}

/// `mean -> T mean`, `cov -> T cov T^T`.
pub fn propagate(state: &GaussianState, t: &Matrix4<f64>) -> Result<GaussianState> {
    if state.n_modes() != 2 {
        return Err(Error::InvalidParameter { name: "propagate", reason: "state must be two-mode".into() });
    }
    let td = DMatrix::from_fn(4, 4, |i, j| t[(i, j)]);
    let cov = &td * &state.cov * td.transpose();
    let cov = DMatrix::from_fn(4, 4, |i, j| 0.5 * (cov[(i, j)] + cov[(j, i)]));
    Ok(GaussianState { mean: &td * &state.mean, cov })
}

/// Marginal of the system.
pub fn reduce_system(state: &GaussianState) -> GaussianState {
    GaussianState { mean: state.mean.rows(0, 2).into_owned(), cov: state.cov.view((0, 0), (2, 2)).into_owned() }
}

/// Scaled phase-space area `sqrt(det cov) / (hbar/2)` of a single mode.
pub fn area_ratio(state: &GaussianState, hbar: f64) -> Result<f64> {
    let c = &state.cov;
    let prod = c[(0, 0)] * c[(1, 1)];
    let det = prod - c[(0, 1)] * c[(1, 0)];
    let tol = 1e-12 * prod.abs().max(0.25 * hbar * hbar);
    if det < -tol {
        return Err(Error::NonPhysical { radicand: det });
    }
    Ok(area_ratio_from_det(det.max(0.0), hbar))
}

pub fn area_ratio_from_det(det: f64, hbar: f64) -> f64 {
    det.max(0.0).sqrt() / (0.5 * hbar)
}

/// `det(cov)^(1/2) / (hbar/2)^2` for a two-mode state; 1 for pure states.
pub fn total_area_ratio(state: &GaussianState, hbar: f64) -> f64 {
    state.cov.determinant().max(0.0).sqrt() / (0.25 * hbar * hbar)
}

fn check_area(a: f64) -> Result<f64> {
    if a.is_nan() || a < 1.0 - 1e-9 {
        return Err(Error::Domain { what: "scaled area (A >= 1)", value: a });
    }
    Ok(a.max(1.0))
}

/// Von Neumann entropy `((A+1) ln(A+1) - (A-1) ln(A-1))/2 - ln 2`.
pub fn entropy_exact(a: f64) -> Result<f64> {
    let a = check_area(a)?;
    let x = a - 1.0;
    if x == 0.0 {
        return Ok(0.0);
    }
    if x < 1e-6 {
        return Ok(0.5 * x * (1.0 + std::f64::consts::LN_2 - x.ln()) + x * x / 8.0);
    }
    if a.is_infinite() {
        return Ok(f64::INFINITY);
    }
    // Rearranged so no large, nearly equal logarithms are subtracted.
    Ok(0.5 * (x * (a + 1.0)).ln() + 0.5 * a * (2.0 / x).ln_1p() - std::f64::consts::LN_2)
}

/// `ln A`.
pub fn entropy_approx(a: f64) -> Result<f64> {
    Ok(check_area(a)?.ln())
}

/// `1 - 1/A`.
pub fn linear_entropy(a: f64) -> Result<f64> {
    Ok(1.0 - 1.0 / check_area(a)?)
}

pub fn purity(a: f64) -> Result<f64> {
    Ok(1.0 / check_area(a)?)
}

/// `(m w^2 <x^2> + <p^2>/m) / 2` from the raw second moments.
pub fn energy(state: &GaussianState, m_s: f64, omega: f64) -> f64 {
    let x2 = state.dx2() + state.mean[0] * state.mean[0];
    let p2 = state.dp2() + state.mean[1] * state.mean[1];
    0.5 * (m_s * omega * omega * x2 + p2 / m_s)
}

/// Scalar summary of a reduced state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// Phase-space area `sqrt(det)`.
    pub area: f64,
    /// Area in units of `hbar/2`.
    pub a: f64,
    pub s: f64,
    pub s_approx: f64,
    pub varsigma: f64,
    pub purity: f64,
    pub energy: f64,
}

impl Diagnostics {
    /// Diagnostics from a known scaled area and energy.
    pub fn from_area(a: f64, energy: f64, hbar: f64) -> Result<Self> {
        Ok(Self {
            area: a * 0.5 * hbar,
            a,
            s: entropy_exact(a)?,
            s_approx: entropy_approx(a)?,
            varsigma: linear_entropy(a)?,
            purity: purity(a)?,
            energy,
        })
    }

    /// Placeholder for a sample whose covariance is not a physical state.
    pub fn unphysical(energy: f64) -> Self {
        let nan = f64::NAN;
        Self { area: nan, a: nan, s: nan, s_approx: nan, varsigma: nan, purity: nan, energy }
    }

    pub fn of(state: &GaussianState, m_s: f64, omega: f64, hbar: f64) -> Result<Self> {
        Self::from_area(area_ratio(state, hbar)?, energy(state, m_s, omega), hbar)
    }
}
