//! Bare supersystem parameters, their normal-mode image, and the generalized
//! kernels shared by inverted, harmonic and free environments.
//!
//! The joint Hamiltonian in mass-weighted coordinates `X = sqrt(m_s) x`,
//! `Y = sqrt(m_e) y` has the stiffness matrix
//!
//! ```text
//! K = [[ Omega^2,  g        ],
//!      [ g,       -Lambda^2 ]]
//! ```
//!
//! whose eigenvalues are `omega^2` (the system-like mode) and `-lambda^2`
//! (the environment-like mode). `lambda^2 > 0` is an inverted mode, `< 0` a
//! stable oscillator of frequency `sqrt(-lambda^2)`, and `0` a free particle.

use serde::{Deserialize, Serialize};

use crate::error::{check_finite, check_positive, Error, Result};

/// Bare parameters of the system oscillator, the environment and their coupling.
///
/// `lambda_sq_bare` is signed: positive for an inverted environment, negative
/// for a stable harmonic one, zero for a free particle. `g` is the off-diagonal
/// stiffness (a frequency squared).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SupersystemParams {
    pub m_s: f64,
    pub m_e: f64,
    pub omega_bare: f64,
    pub lambda_sq_bare: f64,
    pub g: f64,
    #[serde(default = "default_hbar")]
    pub hbar: f64,
}

pub(crate) fn default_hbar() -> f64 {
    1.0
}

impl SupersystemParams {
    pub fn validate(&self) -> Result<()> {
        check_positive("m_s", self.m_s)?;
        check_positive("m_e", self.m_e)?;
        check_positive("hbar", self.hbar)?;
        check_finite("omega_bare", self.omega_bare)?;
        check_finite("lambda_sq_bare", self.lambda_sq_bare)?;
        check_finite("g", self.g)?;
        if self.omega_bare < 0.0 {
            return Err(Error::InvalidParameter { name: "omega_bare", reason: format!("must be >= 0, got {}", self.omega_bare) });
        }
        if self.g < 0.0 {
            return Err(Error::InvalidParameter { name: "g", reason: format!("must be >= 0, got {}", self.g) });
        }
        Ok(())
    }
}

/// Normal-mode description of the supersystem.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalModes {
    /// Frequency of the stable, system-like mode.
    pub omega: f64,
    /// Signed frequency squared of the environment-like mode.
    pub lambda_sq: f64,
    /// Mixing angle in radians.
    pub theta_c: f64,
    /// Mass ratio `m_e / m_s`.
    pub eps: f64,
    pub m_s: f64,
    pub m_e: f64,
    pub hbar: f64,
}

impl NormalModes {
    pub fn new(omega: f64, lambda_sq: f64, theta_c: f64, m_s: f64, m_e: f64, hbar: f64) -> Result<Self> {
        check_positive("m_s", m_s)?;
        check_positive("m_e", m_e)?;
        check_positive("hbar", hbar)?;
        check_finite("omega", omega)?;
        check_finite("lambda_sq", lambda_sq)?;
        check_finite("theta_c", theta_c)?;
        if omega < 0.0 {
            return Err(Error::InvalidParameter { name: "omega", reason: format!("must be >= 0, got {omega}") });
        }
        Ok(Self { omega, lambda_sq, theta_c, eps: m_e / m_s, m_s, m_e, hbar })
    }

    /// Unit masses and `hbar = 1`.
    pub fn unit(omega: f64, lambda_sq: f64, theta_c: f64) -> Result<Self> {
        Self::new(omega, lambda_sq, theta_c, 1.0, 1.0, 1.0)
    }

    /// Instability rate `sqrt(lambda^2)` for an inverted environment, 0 otherwise.
    pub fn lambda(&self) -> f64 {
        if self.lambda_sq > 0.0 {
            self.lambda_sq.sqrt()
        } else {
            0.0
        }
    }

    /// Signed bare system stiffness `Omega^2 = omega^2 cos^2 - lambda^2 sin^2`.
    pub fn bare_omega_sq(&self) -> f64 {
        let (s, c) = self.theta_c.sin_cos();
        self.omega * self.omega * c * c - self.lambda_sq * s * s
    }

    pub fn with_theta(&self, theta_c: f64) -> Self {
        Self { theta_c, ..*self }
    }
}

/// Diagonalize the bare stiffness matrix.
///
/// The root `R` carries the sign of `Omega^2 + Lambda^2`, so the mode labelled
/// `omega` is always the one continuously connected to the bare system at
/// `g = 0`. For `g > 0` and `Omega^2 + Lambda^2 >= 0` the mixing angle is negative.
pub fn derive_modes(params: &SupersystemParams) -> Result<NormalModes> {
    params.validate()?;
    let om2 = params.omega_bare * params.omega_bare;
    let la2 = params.lambda_sq_bare;
    let g = params.g;
    let sum = om2 + la2;
    let sign = if sum >= 0.0 { 1.0 } else { -1.0 };
    let root = sign * (sum * sum + 4.0 * g * g).sqrt();

    // R - (Omega^2 + Lambda^2), written without cancellation.
    let (shift, theta_c) = if g == 0.0 {
        (0.0, 0.0)
    } else {
        let denom = sum + root;
        (4.0 * g * g / denom, (-2.0 * g / denom).atan())
    };
    let omega_sq = om2 + 0.5 * shift;
    let lambda_sq = la2 + 0.5 * shift;

    if omega_sq < 0.0 {
        // Within rounding of zero counts as a free system mode.
        if omega_sq < -1e-14 * (om2.abs() + la2.abs() + g) {
            return Err(Error::NegativeOmegaSquared { omega_sq });
        }
    }
    NormalModes::new(omega_sq.max(0.0).sqrt(), lambda_sq, theta_c, params.m_s, params.m_e, params.hbar)
}

/// Rebuild bare parameters from a normal-mode description.
///
/// The coupling is reported as `|g|`; the sign of `theta_c` does not survive
/// the round trip.
pub fn params_from_modes(omega: f64, lambda_sq: f64, theta_c: f64, m_s: f64, m_e: f64, hbar: f64) -> Result<SupersystemParams> {
    let modes = NormalModes::new(omega, lambda_sq, theta_c, m_s, m_e, hbar)?;
    params_for(&modes)
}

/// [`params_from_modes`] taking an existing [`NormalModes`].
pub fn params_for(modes: &NormalModes) -> Result<SupersystemParams> {
    let (s, c) = modes.theta_c.sin_cos();
    let w2 = modes.omega * modes.omega;
    let l2 = modes.lambda_sq;
    let om2 = w2 * c * c - l2 * s * s;
    let la2 = l2 * c * c - w2 * s * s;
    let g = ((w2 + l2) * s * c).abs();
    if om2 < 0.0 {
        return Err(Error::NonRealBareFrequency { omega_sq: om2 });
    }
    let params = SupersystemParams { m_s: modes.m_s, m_e: modes.m_e, omega_bare: om2.sqrt(), lambda_sq_bare: la2, g, hbar: modes.hbar };
    params.validate()?;
    Ok(params)
}

/// Generalized trigonometric/hyperbolic kernel pair for signed `lambda_sq`.
///
/// `c'' = lambda_sq * c`, `s' = c`, `c' = lambda_sq * s`, with `c(0) = 1`,
/// `s(0) = 0`. The pair also satisfies `c^2 - lambda_sq * s^2 = 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Kernel {
    pub c: f64,
    pub s: f64,
    pub k: f64,
}

impl Kernel {
    pub fn new(lambda_sq: f64, t: f64) -> Self {
        let (c, s) = gkernels(lambda_sq, t);
        Self { c, s, k: lambda_sq }
    }

    /// Derivatives of `s` of order 0..=3.
    pub fn s_derivs(&self) -> [f64; 4] {
        [self.s, self.c, self.k * self.s, self.k * self.c]
    }
}

/// `(c, s)` with `c = cosh(sqrt(l) t)`, `s = sinh(sqrt(l) t)/sqrt(l)` for `l > 0`,
/// the trigonometric analogue for `l < 0` and `(1, t)` for `l = 0`.
pub fn gkernels(lambda_sq: f64, t: f64) -> (f64, f64) {
    let x = lambda_sq * t * t;
    if x.abs() < 1e-6 {
        // Taylor series; the truncation error is below x^4/8! relative.
        let c = 1.0 + x / 2.0 * (1.0 + x / 12.0 * (1.0 + x / 30.0));
        let s = t * (1.0 + x / 6.0 * (1.0 + x / 20.0 * (1.0 + x / 42.0)));
        return (c, s);
    }
    if lambda_sq > 0.0 {
        let r = lambda_sq.sqrt();
        ((r * t).cosh(), (r * t).sinh() / r)
    } else {
        let r = (-lambda_sq).sqrt();
        ((r * t).cos(), (r * t).sin() / r)
    }
}
