//! Time-dependent master-equation coefficients.
//!
//! Two independent routes are provided: [`coeffs_general`] works from the mode
//! functions `phi0`, `phi1` and their derivatives and applies to any
//! environment; [`coeffs_closed`] evaluates the explicit trigonometric /
//! hyperbolic expressions available for an inverted environment.
//! [`coeffs`] picks the closed route whenever it applies.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::modes::NormalModes;
use crate::propagator::{self, ModeFunctions, DEFAULT_SINGULAR_GUARD};

/// Initial second cumulants and means of the environment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvVariance {
    pub dy2: f64,
    pub dq2: f64,
    pub dyq: f64,
    #[serde(default)]
    pub mean_y: f64,
    #[serde(default)]
    pub mean_q: f64,
}

impl EnvVariance {
    pub fn new(dy2: f64, dq2: f64, dyq: f64, hbar: f64) -> Result<Self> {
        let v = Self { dy2, dq2, dyq, mean_y: 0.0, mean_q: 0.0 };
        v.validate(hbar)?;
        Ok(v)
    }

    pub fn with_means(self, mean_y: f64, mean_q: f64) -> Self {
        Self { mean_y, mean_q, ..self }
    }

    pub fn validate(&self, hbar: f64) -> Result<()> {
        for (name, v) in [("dy2", self.dy2), ("dq2", self.dq2), ("dyq", self.dyq), ("mean_y", self.mean_y), ("mean_q", self.mean_q)] {
            crate::error::check_finite(name, v)?;
        }
        if self.dy2 < 0.0 || self.dq2 < 0.0 {
            return Err(Error::InvalidParameter { name: "env variance", reason: "diagonal entries must be >= 0".into() });
        }
        let det = self.dy2 * self.dq2 - self.dyq * self.dyq;
        let floor = 0.25 * hbar * hbar;
        if det < floor * (1.0 - 1e-9) {
            return Err(Error::NonPhysical { radicand: det - floor });
        }
        Ok(())
    }
}

/// 2x2 diffusion sub-coefficient tensor `[[yy, yq], [qy, qq]]`.
pub type Tensor2 = [[f64; 2]; 2];

/// All master-equation coefficients at one instant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MECoefficients {
    pub t: f64,
    pub omega_eff_sq: f64,
    pub gamma_eff: f64,
    pub fy: f64,
    pub fq: f64,
    /// Net mean force `F_y <y0> + F_q <q0>`.
    pub f: f64,
    pub f1: f64,
    pub f2: f64,
    pub f1_tensor: Tensor2,
    pub f2_tensor: Tensor2,
    /// Common prefactor of the closed-form diffusion tensors; NaN on the general route.
    pub beta: f64,
    pub dtilde: f64,
    pub valid: bool,
}

impl MECoefficients {
    fn finish(mut self, env: &EnvVariance, guard: f64) -> Self {
        self.f = self.fy * env.mean_y + self.fq * env.mean_q;
        self.f1 = contract(&self.f1_tensor, env);
        self.f2 = contract(&self.f2_tensor, env);
        self.valid = self.dtilde.abs() > guard;
        if !self.valid {
            self.omega_eff_sq = f64::NAN;
            self.gamma_eff = f64::NAN;
            self.fy = f64::NAN;
            self.fq = f64::NAN;
            self.f = f64::NAN;
        }
        self
    }
}

/// Full trace of `tensor . V_E`:
/// `t_yy dy2 + (t_yq + t_qy) dyq + t_qq dq2`.
///
/// Each off-diagonal entry multiplies the (symmetric) cross cumulant once, which
/// is what `Cov(F, p(t))` and `Cov(F, x(t))` expand to.
pub fn contract(tensor: &Tensor2, env: &EnvVariance) -> f64 {
    tensor[0][0] * env.dy2 + (tensor[0][1] + tensor[1][0]) * env.dyq + tensor[1][1] * env.dq2
}

/// Coefficients from the mode-function ratios, valid for any environment sign.
pub fn coeffs_general(modes: &NormalModes, env: &EnvVariance, t: f64) -> MECoefficients {
    coeffs_general_guarded(modes, env, t, DEFAULT_SINGULAR_GUARD)
}

pub fn coeffs_general_guarded(modes: &NormalModes, env: &EnvVariance, t: f64, guard: f64) -> MECoefficients {
    let ModeFunctions { phi0, dphi0, d2phi0, d3phi0, phi1, dphi1, d2phi1, d3phi1 } = propagator::mode_functions(modes, t);
    let d = dphi0 * dphi0 - d2phi0 * phi0;
    let omega_eff_sq = (d2phi0 * d2phi0 - d3phi0 * dphi0) / d;
    let gamma_eff = (d3phi0 * phi0 - dphi0 * d2phi0) / d;

    let (ms, me, hb2) = (modes.m_s, modes.m_e, modes.hbar * modes.hbar);
    let fy = (ms * me).sqrt() * (d3phi1 + gamma_eff * d2phi1 + omega_eff_sq * dphi1);
    let fq = (ms / me).sqrt() * (d2phi1 + gamma_eff * dphi1 + omega_eff_sq * phi1);

    // Response of x(t), p(t) to y0, q0.
    let t13 = (me / ms).sqrt() * dphi1;
    let t14 = phi1 / (me * ms).sqrt();
    let t23 = (me * ms).sqrt() * d2phi1;
    let t24 = (ms / me).sqrt() * dphi1;

    MECoefficients {
        t,
        omega_eff_sq,
        gamma_eff,
        fy,
        fq,
        f: 0.0,
        f1: 0.0,
        f2: 0.0,
        f1_tensor: [[fy * t23 / hb2, fy * t24 / hb2], [fq * t23 / hb2, fq * t24 / hb2]],
        f2_tensor: [[fy * t13 / hb2, fy * t14 / hb2], [fq * t13 / hb2, fq * t14 / hb2]],
        beta: f64::NAN,
        dtilde: d,
        valid: true,
    }
    .finish(env, guard)
}

/// Explicit expressions for an inverted environment with a stable system mode.
pub fn coeffs_closed(modes: &NormalModes, env: &EnvVariance, t: f64) -> Result<MECoefficients> {
    coeffs_closed_guarded(modes, env, t, DEFAULT_SINGULAR_GUARD)
}

pub fn coeffs_closed_guarded(modes: &NormalModes, env: &EnvVariance, t: f64, guard: f64) -> Result<MECoefficients> {
    if !(modes.lambda_sq > 0.0 && modes.omega > 0.0) {
        return Err(Error::UnsupportedRegime { omega: modes.omega, lambda_sq: modes.lambda_sq });
    }
    let (w, l) = (modes.omega, modes.lambda());
    let (ms, me, hb2) = (modes.m_s, modes.m_e, modes.hbar * modes.hbar);
    let (s, c) = modes.theta_c.sin_cos();
    let (c2, s2) = (c * c, s * s);
    let sin2 = (2.0 * modes.theta_c).sin();
    let sum = w * w + l * l;
    let (swt, cwt) = (w * t).sin_cos();
    let (shl, chl) = ((l * t).sinh(), (l * t).cosh());

    let dtilde = propagator::dtilde(modes, t);
    let d = w * l * dtilde;

    let omega_eff_sq =
        w * l / d * (w * w * c2 * c2 - l * l * s2 * s2 + sin2 * sin2 / 4.0 * ((w * w - l * l) * cwt * chl - 2.0 * w * l * swt * shl));
    let gamma_eff = sum * sin2 * sin2 / (4.0 * d) * (l * swt * chl - w * cwt * shl);

    let u = c2 * chl + s2 * cwt;
    let v = w * c2 * shl + l * s2 * swt;
    let fy = -(ms * me).sqrt() * w * l * sum * sin2 / (2.0 * d) * u;
    let fq = -(ms / me).sqrt() * sum * sin2 / (2.0 * d) * v;

    let beta = ms / (4.0 * hb2 * d) * sin2 * sin2 * sum;
    let p = l * shl + w * swt;
    let q = chl - cwt;
    let r = w * shl - l * swt;
    let f1_tensor = [[me * w * l * beta * u * p, w * l * beta * u * q], [beta * v * p, beta / me * v * q]];
    // The position-response tensor carries one fewer power of m_s than the
    // momentum one; dividing here keeps f2 = Cov(F, x(t)) / hbar^2.
    let f2_tensor = [[me * w * l * beta * u * q / ms, beta * u * r / ms], [beta * v * q / ms, beta / (me * w * l) * v * r / ms]];

    Ok(MECoefficients { t, omega_eff_sq, gamma_eff, fy, fq, f: 0.0, f1: 0.0, f2: 0.0, f1_tensor, f2_tensor, beta, dtilde, valid: true }
        .finish(env, guard))
}

/// Closed forms where they apply, the general route otherwise.
pub fn coeffs(modes: &NormalModes, env: &EnvVariance, t: f64) -> MECoefficients {
    coeffs_closed(modes, env, t).unwrap_or_else(|_| coeffs_general(modes, env, t))
}

impl MECoefficients {
    /// Every scalar and tensor field in a fixed order.
    pub fn fields(&self) -> [f64; 15] {
        let [[a, b], [c, d]] = self.f1_tensor;
        let [[e, f], [g, h]] = self.f2_tensor;
        [self.omega_eff_sq, self.gamma_eff, self.fy, self.fq, self.f, self.f1, self.f2, a, b, c, d, e, f, g, h]
    }
}

/// Largest relative field difference between two coefficient sets.
///
/// `gamma_eff` starts at zero and stays of order theta^2 for small t, so its
/// difference is measured against at least `1e-6 (omega + lambda)`.
pub fn route_deviation(a: &MECoefficients, b: &MECoefficients, modes: &NormalModes) -> f64 {
    let gamma_floor = 1e-6 * (modes.omega + modes.lambda());
    a.fields()
        .iter()
        .zip(b.fields().iter())
        .enumerate()
        .map(|(k, (x, y))| {
            let d = (x - y).abs();
            let scale = x.abs().max(y.abs()).max(if k == 1 { gamma_floor } else { 0.0 });
            if d == 0.0 {
                0.0
            } else {
                d / scale
            }
        })
        .fold(0.0, f64::max)
}
