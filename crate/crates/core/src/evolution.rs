//! Reduced-system trajectories: exact symplectic propagation and numerical
//! integration of the master-equation moment equations.

use nalgebra::{Matrix4, Vector4};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis;
use crate::coefficients::{coeffs, EnvVariance, MECoefficients};
use crate::error::{Error, Result};
use crate::gaussian::{self, Diagnostics, GaussianState, SqueezeSpec};
use crate::modes::NormalModes;
use crate::ode::{Dopri5, StepControl};
use crate::propagator::{self, system_minors};

/// First and second moments of the system, `<x>, <p>` and the second cumulants.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Moments {
    pub mean_x: f64,
    pub mean_p: f64,
    pub dx2: f64,
    pub dp2: f64,
    pub dxp: f64,
}

impl Moments {
    pub const NAMES: [&'static str; 5] = ["mean_x", "mean_p", "dx2", "dp2", "dxp"];

    pub fn of(state: &GaussianState) -> Self {
        Self { mean_x: state.mean[0], mean_p: state.mean[1], dx2: state.dx2(), dp2: state.dp2(), dxp: state.dxp() }
    }

    pub fn as_array(&self) -> [f64; 5] {
        [self.mean_x, self.mean_p, self.dx2, self.dp2, self.dxp]
    }

    /// `[<x>, <p>, <x^2>, <p^2>, <{x,p}/2>]`.
    fn raw(&self) -> [f64; 5] {
        [
            self.mean_x,
            self.mean_p,
            self.dx2 + self.mean_x * self.mean_x,
            self.dp2 + self.mean_p * self.mean_p,
            self.dxp + self.mean_x * self.mean_p,
        ]
    }

    fn from_raw(r: &[f64; 5]) -> Self {
        Self { mean_x: r[0], mean_p: r[1], dx2: r[2] - r[0] * r[0], dp2: r[3] - r[1] * r[1], dxp: r[4] - r[0] * r[1] }
    }

    pub fn state(&self) -> GaussianState {
        GaussianState {
            mean: nalgebra::DVector::from_vec(vec![self.mean_x, self.mean_p]),
            cov: nalgebra::DMatrix::from_row_slice(2, 2, &[self.dx2, self.dxp, self.dxp, self.dp2]),
        }
    }
}

/// Initial product state: squeezed system and environment with mean offsets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitialState {
    pub sys: SqueezeSpec,
    pub env: SqueezeSpec,
    #[serde(default)]
    pub sys_mean: [f64; 2],
    #[serde(default)]
    pub env_mean: [f64; 2],
}

impl InitialState {
    pub fn new(sys: SqueezeSpec, env: SqueezeSpec) -> Self {
        Self { sys, env, sys_mean: [0.0; 2], env_mean: [0.0; 2] }
    }

    pub fn validate(&self) -> Result<()> {
        self.sys.validate()?;
        self.env.validate()?;
        for v in self.sys_mean.iter().chain(&self.env_mean) {
            crate::error::check_finite("mean", *v)?;
        }
        Ok(())
    }

    /// Two-mode state; squeezing is referred to each party's own mass.
    pub fn product(&self, modes: &NormalModes) -> GaussianState {
        let mut sys = gaussian::squeezed_pure_with_mass(self.sys, modes.m_s, modes.hbar);
        let mut env = gaussian::squeezed_pure_with_mass(self.env, modes.m_e, modes.hbar);
        sys.mean = nalgebra::DVector::from_column_slice(&self.sys_mean);
        env.mean = nalgebra::DVector::from_column_slice(&self.env_mean);
        gaussian::product_state(&sys, &env).expect("single-mode factors")
    }

    pub fn env_variance(&self, modes: &NormalModes) -> EnvVariance {
        self.product(modes).env_variance().expect("two-mode state")
    }
}

/// Which frequency multiplies `<{x,p}/2>` in the `<p^2>` equation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrequencyVariant {
    /// `omega_eff^2(t)`, as in the other drift terms.
    #[default]
    Effective,
    /// The constant normal-mode `omega^2`.
    ModeOmega,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IntegratorOptions {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_step: f64,
    /// `|D~|` below which master-equation stepping is suspended.
    pub divergence_guard: f64,
    pub frequency: FrequencyVariant,
}

impl Default for IntegratorOptions {
    fn default() -> Self {
        Self { rel_tol: 1e-10, abs_tol: 1e-12, max_step: 0.1, divergence_guard: 1e-3, frequency: FrequencyVariant::Effective }
    }
}

impl IntegratorOptions {
    pub fn validate(&self) -> Result<()> {
        crate::error::check_positive("rel_tol", self.rel_tol)?;
        crate::error::check_positive("abs_tol", self.abs_tol)?;
        crate::error::check_positive("max_step", self.max_step)?;
        crate::error::check_positive("divergence_guard", self.divergence_guard)
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrajectoryMeta {
    pub method: String,
    /// Per-sample flag: value taken from the exact propagator while the
    /// master equation was suspended.
    pub bridged: Vec<bool>,
    pub bridge_intervals: Vec<[f64; 2]>,
    pub first_bridge: Option<f64>,
    /// Master-equation samples whose moments violate the uncertainty bound;
    /// their entropies are NaN.
    pub nonphysical: Vec<bool>,
    pub steps: usize,
    pub rejected_steps: usize,
    pub frequency: Option<FrequencyVariant>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub moments: Vec<Moments>,
    pub diags: Vec<Diagnostics>,
    pub coeffs: Option<Vec<MECoefficients>>,
    pub meta: TrajectoryMeta,
}

impl Trajectory {
    pub fn entropy(&self) -> Vec<f64> {
        self.diags.iter().map(|d| d.s).collect()
    }
}

pub fn uniform_grid(t_max: f64, samples: usize) -> Vec<f64> {
    let n = samples.max(2);
    (0..n).map(|i| t_max * i as f64 / (n - 1) as f64).collect()
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::InvalidParameter { name: "grid", reason: "empty".into() });
    }
    if grid.iter().any(|t| !t.is_finite() || *t < 0.0) || grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParameter { name: "grid", reason: "times must be finite, >= 0 and strictly increasing".into() });
    }
    Ok(())
}

/// Exact reduced state at arbitrary times for one initial condition.
///
/// The reduced determinant is assembled as a sum of squares (Cauchy-Binet on
/// `T_sys W`, `W W^T = V0`) from the closed-form minors of `T`, so the area
/// stays accurate when the entries of `T` are exponentially large.
#[derive(Debug, Clone)]
pub struct ExactPropagator {
    modes: NormalModes,
    mean0: Vector4<f64>,
    cov0: Matrix4<f64>,
    compound: [[f64; 6]; 6],
}

const PAIRS: [(usize, usize); 6] = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)];

impl ExactPropagator {
    pub fn new(modes: &NormalModes, initial: &GaussianState) -> Result<Self> {
        let cov0 = Matrix4::from_fn(|i, j| initial.cov[(i, j)]);
        let w = cov0.cholesky().ok_or(Error::NonPhysical { radicand: cov0.determinant() })?.l();
        let mut compound = [[0.0; 6]; 6];
        for (r, &(i, j)) in PAIRS.iter().enumerate() {
            for (c, &(k, l)) in PAIRS.iter().enumerate() {
                compound[r][c] = w[(i, k)] * w[(j, l)] - w[(i, l)] * w[(j, k)];
            }
        }
        Ok(Self { modes: *modes, mean0: Vector4::from_fn(|i, _| initial.mean[i]), cov0, compound })
    }

    /// Reduced state and its covariance determinant.
    pub fn reduced(&self, t: f64) -> (GaussianState, f64) {
        let tm = propagator::full_transition(&self.modes, t);
        let rows = tm.fixed_view::<2, 4>(0, 0).into_owned();
        let cov = rows * self.cov0 * rows.transpose();
        let mean = rows * self.mean0;
        let minors = system_minors(&self.modes, t).as_array();
        let det: f64 = (0..6)
            .map(|k| {
                let y: f64 = (0..6).map(|i| minors[i] * self.compound[i][k]).sum();
                y * y
            })
            .sum();
        let state = GaussianState {
            mean: nalgebra::DVector::from_column_slice(mean.as_slice()),
            cov: nalgebra::DMatrix::from_row_slice(
                2,
                2,
                &[cov[(0, 0)], 0.5 * (cov[(0, 1)] + cov[(1, 0)]), 0.5 * (cov[(0, 1)] + cov[(1, 0)]), cov[(1, 1)]],
            ),
        };
        (state, det)
    }

    pub fn moments(&self, t: f64) -> Moments {
        Moments::of(&self.reduced(t).0)
    }

    pub fn diagnostics(&self, t: f64) -> Result<(Moments, Diagnostics)> {
        let (state, det) = self.reduced(t);
        let a = gaussian::area_ratio_from_det(det, self.modes.hbar);
        let e = gaussian::energy(&state, self.modes.m_s, self.modes.omega);
        Ok((Moments::of(&state), Diagnostics::from_area(a, e, self.modes.hbar)?))
    }
}

/// Ground-truth trajectory from the exact propagator; every sample independent.
pub fn run_exact(modes: &NormalModes, init: &InitialState, grid: &[f64]) -> Result<Trajectory> {
    check_grid(grid)?;
    init.validate()?;
    let prop = ExactPropagator::new(modes, &init.product(modes))?;
    let samples: Vec<(Moments, Diagnostics)> = grid.par_iter().map(|&t| prop.diagnostics(t)).collect::<Result<_>>()?;
    let (moments, diags) = samples.into_iter().unzip();
    Ok(Trajectory {
        times: grid.to_vec(),
        moments,
        diags,
        coeffs: None,
        meta: TrajectoryMeta {
            method: "exact".into(),
            bridged: vec![false; grid.len()],
            nonphysical: vec![false; grid.len()],
            ..Default::default()
        },
    })
}

fn me_rhs(modes: &NormalModes, env: &EnvVariance, variant: FrequencyVariant, t: f64, y: &[f64; 5]) -> Result<[f64; 5]> {
    let c = coeffs(modes, env, t);
    if !c.valid {
        return Err(Error::SingularAtDivergence { t, dtilde: c.dtilde });
    }
    let m = modes.m_s;
    let hb2 = modes.hbar * modes.hbar;
    let w2 = c.omega_eff_sq;
    let w2p = match variant {
        FrequencyVariant::Effective => w2,
        FrequencyVariant::ModeOmega => modes.omega * modes.omega,
    };
    let [x, p, x2, p2, xp] = *y;
    Ok([
        p / m,
        -m * w2 * x - c.gamma_eff * p + c.f,
        2.0 / m * xp,
        -2.0 * m * w2p * xp - 2.0 * c.gamma_eff * p2 + 2.0 * c.f * p + 2.0 * hb2 * c.f1,
        -m * w2 * x2 + p2 / m - c.gamma_eff * xp + c.f * x + hb2 * c.f2,
    ])
}

/// Master-equation trajectory. Stepping is suspended wherever
/// `|D~| <= divergence_guard` and resumed from the exact state on exit.
pub fn run_me(modes: &NormalModes, init: &InitialState, grid: &[f64], opts: &IntegratorOptions) -> Result<Trajectory> {
    check_grid(grid)?;
    init.validate()?;
    opts.validate()?;
    if grid[0] != 0.0 {
        return Err(Error::InvalidParameter { name: "grid", reason: "master-equation runs start at t = 0".into() });
    }
    let env = init.env_variance(modes);
    let prop = ExactPropagator::new(modes, &init.product(modes))?;
    let t_end = *grid.last().unwrap();
    let bad = analysis::guard_intervals(modes, t_end, opts.divergence_guard);

    let control = StepControl { rel_tol: opts.rel_tol, abs_tol: opts.abs_tol, max_step: opts.max_step, ..Default::default() };
    let mut ig = Dopri5::new(control, 0.0, prop.moments(0.0).raw());
    let mut rhs = |t: f64, y: &[f64; 5]| me_rhs(modes, &env, opts.frequency, t, y);

    let mut moments = Vec::with_capacity(grid.len());
    let mut bridged = Vec::with_capacity(grid.len());
    let mut next_bad = 0usize;
    for &t in grid {
        // Cross every suspended interval that ends before t.
        while next_bad < bad.len() && bad[next_bad][0] <= t {
            let [lo, hi] = bad[next_bad];
            ig.advance_to(&mut rhs, lo)?;
            if hi > t {
                break;
            }
            ig.reset(hi, prop.moments(hi).raw());
            next_bad += 1;
        }
        let inside = next_bad < bad.len() && bad[next_bad][0] <= t && t < bad[next_bad][1];
        if inside {
            moments.push(prop.moments(t));
            bridged.push(true);
        } else {
            ig.advance_to(&mut rhs, t)?;
            moments.push(Moments::from_raw(&ig.y));
            bridged.push(false);
        }
    }

    // Past a divergence the moment equations amplify integration error while
    // the true area shrinks relative to dx2 dp2, so late samples can land
    // outside the physical region; those are flagged rather than fatal.
    let mut nonphysical = vec![false; grid.len()];
    let diags = moments
        .iter()
        .enumerate()
        .map(|(i, m)| {
            Diagnostics::of(&m.state(), modes.m_s, modes.omega, modes.hbar).or_else(|_| {
                nonphysical[i] = true;
                Ok(Diagnostics::unphysical(gaussian::energy(&m.state(), modes.m_s, modes.omega)))
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let coeffs = grid.iter().map(|&t| coeffs(modes, &env, t)).collect();
    let intervals: Vec<[f64; 2]> = bad.iter().copied().filter(|iv| iv[0] <= t_end).collect();
    Ok(Trajectory {
        times: grid.to_vec(),
        moments,
        diags,
        coeffs: Some(coeffs),
        meta: TrajectoryMeta {
            method: "master_equation".into(),
            bridged,
            first_bridge: intervals.first().map(|iv| iv[0]),
            bridge_intervals: intervals,
            nonphysical,
            steps: ig.steps,
            rejected_steps: ig.rejected,
            frequency: Some(opts.frequency),
        },
    })
}

/// Deviation of `a` from the reference `b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub max_abs: [f64; 5],
    /// `max_t |a - b| / max_t |b|` per moment.
    pub max_rel: [f64; 5],
    pub rel_err_max: f64,
    /// Per-sample maximum over moments of `|a - b| / max_t |b|`.
    pub sample_rel: Vec<f64>,
    /// Samples left out of the maxima because either side was bridged.
    pub excluded: Vec<bool>,
}

pub fn compare_trajectories(a: &Trajectory, b: &Trajectory) -> Result<ComparisonReport> {
    if a.times != b.times {
        return Err(Error::GridMismatch(format!("{} vs {} samples", a.times.len(), b.times.len())));
    }
    let n = a.times.len();
    let flag = |tr: &Trajectory, i: usize| tr.meta.bridged.get(i).copied().unwrap_or(false);
    let excluded: Vec<bool> = (0..n).map(|i| flag(a, i) || flag(b, i)).collect();
    let mut scale = [0.0f64; 5];
    for m in &b.moments {
        for (k, v) in m.as_array().iter().enumerate() {
            scale[k] = scale[k].max(v.abs());
        }
    }
    let mut max_abs = [0.0f64; 5];
    let mut sample_rel = vec![0.0; n];
    for i in 0..n {
        let (x, y) = (a.moments[i].as_array(), b.moments[i].as_array());
        for k in 0..5 {
            let d = (x[k] - y[k]).abs();
            let r = if scale[k] > 0.0 { d / scale[k] } else { d };
            sample_rel[i] = f64::max(sample_rel[i], r);
            if !excluded[i] {
                max_abs[k] = max_abs[k].max(d);
            }
        }
    }
    let max_rel: [f64; 5] = std::array::from_fn(|k| if scale[k] > 0.0 { max_abs[k] / scale[k] } else { max_abs[k] });
    let rel_err_max = max_rel.iter().fold(0.0f64, |m, v| m.max(*v));
    Ok(ComparisonReport { max_abs, max_rel, rel_err_max, sample_rel, excluded })
}
