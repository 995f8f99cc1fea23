//! Mode functions, the full transition matrix `T(t)`, the partial-knowledge
//! matrix `T_p(t)` and the drift matrix `dT_p/dt * T_p^-1`.
//!
//! Phase-space ordering is `[x, p, y, q]` throughout.

use nalgebra::{Matrix2, Matrix4};

use crate::error::{Error, Result};
use crate::modes::{Kernel, NormalModes};

/// `|D~|` at or below which `T_p` is treated as singular.
pub const DEFAULT_SINGULAR_GUARD: f64 = 1e-12;

/// `phi0`, `phi1` and their first three time derivatives at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModeFunctions {
    pub phi0: f64,
    pub dphi0: f64,
    pub d2phi0: f64,
    pub d3phi0: f64,
    pub phi1: f64,
    pub dphi1: f64,
    pub d2phi1: f64,
    pub d3phi1: f64,
}

/// Mixing weights and the two mode kernels at time `t`.
///
/// `phi0 = a s1 + b s2` and `phi1 = e (s1 - s2)` with `a = cos^2`, `b = sin^2`,
/// `e = sin(2 theta)/2`; mode 1 is the stable `omega` mode, mode 2 the
/// environment-like mode.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Mixing {
    pub a: f64,
    pub b: f64,
    pub e: f64,
    pub m1: Kernel,
    pub m2: Kernel,
}

impl Mixing {
    pub fn new(modes: &NormalModes, t: f64) -> Self {
        let (s, c) = modes.theta_c.sin_cos();
        Self { a: c * c, b: s * s, e: s * c, m1: Kernel::new(-modes.omega * modes.omega, t), m2: Kernel::new(modes.lambda_sq, t) }
    }

    pub fn mode_functions(&self) -> ModeFunctions {
        let d1 = self.m1.s_derivs();
        let d2 = self.m2.s_derivs();
        let p0 = |i: usize| self.a * d1[i] + self.b * d2[i];
        let p1 = |i: usize| self.e * (d1[i] - d2[i]);
        ModeFunctions { phi0: p0(0), dphi0: p0(1), d2phi0: p0(2), d3phi0: p0(3), phi1: p1(0), dphi1: p1(1), d2phi1: p1(2), d3phi1: p1(3) }
    }

    /// `dphi0^2 - phi0 d2phi0`, expanded with `c^2 - k s^2 = 1` so that no
    /// exponentially large terms cancel.
    pub fn dtilde(&self) -> f64 {
        let (k1, c1, s1) = (self.m1.k, self.m1.c, self.m1.s);
        let (k2, c2, s2) = (self.m2.k, self.m2.c, self.m2.s);
        self.a * self.a + self.b * self.b + self.a * self.b * (2.0 * c1 * c2 - (k1 + k2) * s1 * s2)
    }
}

pub fn mode_functions(modes: &NormalModes, t: f64) -> ModeFunctions {
    Mixing::new(modes, t).mode_functions()
}

/// All six 2x2 minors of rows 1-2 of `T`, `D_ij` for column pairs `(i, j)`.
///
/// Computed in closed form from the kernel identities; at late times the
/// entries of `T` grow like `e^{lambda t}` while these stay accurate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SystemMinors {
    pub d12: f64,
    pub d13: f64,
    pub d14: f64,
    pub d23: f64,
    pub d24: f64,
    pub d34: f64,
}

impl SystemMinors {
    /// Minors in the lexicographic order `12, 13, 14, 23, 24, 34`.
    pub fn as_array(&self) -> [f64; 6] {
        [self.d12, self.d13, self.d14, self.d23, self.d24, self.d34]
    }
}

pub fn system_minors(modes: &NormalModes, t: f64) -> SystemMinors {
    let mx = Mixing::new(modes, t);
    let (a, b, e) = (mx.a, mx.b, mx.e);
    let (k1, c1, s1) = (mx.m1.k, mx.m1.c, mx.m1.s);
    let (k2, c2, s2) = (mx.m2.k, mx.m2.c, mx.m2.s);
    let (ms, me) = (modes.m_s, modes.m_e);
    let cc = c1 * c2;
    let ss = s1 * s2;
    SystemMinors {
        d12: mx.dtilde(),
        d13: (me * ms).sqrt() * e * (k1 * s1 * c2 - k2 * c1 * s2),
        d14: (ms / me).sqrt() * e * (a - b + (b - a) * cc + (a * k1 - b * k2) * ss),
        d23: (me / ms).sqrt() * e * (b - a + (a - b) * cc + (b * k1 - a * k2) * ss),
        d24: e * (c1 * s2 - s1 * c2) / (ms * me).sqrt(),
        d34: e * e * (2.0 - 2.0 * cc + (k1 + k2) * ss),
    }
}

/// Full transition matrix, its partial-knowledge counterpart and `D~`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PropagatorMatrices {
    pub transition: Matrix4<f64>,
    pub tp: Matrix4<f64>,
    pub dtilde: f64,
    pub t: f64,
}

impl PropagatorMatrices {
    pub fn new(modes: &NormalModes, t: f64) -> Self {
        Self { transition: full_transition(modes, t), tp: tp_matrix(modes, t), dtilde: dtilde(modes, t), t }
    }

    /// `T_p^-1` using the stored closed-form determinant.
    pub fn tp_inverse(&self, guard: f64) -> Result<Matrix4<f64>> {
        cofactor_inverse(&self.tp, self.dtilde, guard, self.t)
    }
}

/// `T(t) = S^-1 R^T diag(T_omega, T_lambda) R S`.
///
/// `S` maps `[x, p, y, q]` to mass-weighted coordinates and `R` rotates both
/// position and momentum pairs into normal modes. The stiffness in
/// mass-weighted coordinates is `R^T diag(omega^2, -lambda^2) R` with
/// off-diagonal `sin(2 theta)/2 (omega^2 + lambda^2)`, which makes rows 1-2
/// coincide with the `M_0`, `M_1` blocks built from `phi0`, `phi1`.
pub fn full_transition(modes: &NormalModes, t: f64) -> Matrix4<f64> {
    let mx = Mixing::new(modes, t);
    let (s, c) = modes.theta_c.sin_cos();

    // Normal coordinates u = R [X, Y] and the same for momenta.
    let rot = Matrix2::new(c, s, -s, c);
    let mut r4 = Matrix4::zeros();
    // [X, P, Y, Q] -> [u1, pi1, u2, pi2]
    for (i, j) in [(0usize, 0usize), (0, 1), (1, 0), (1, 1)] {
        r4[(2 * i, 2 * j)] = rot[(i, j)];
        r4[(2 * i + 1, 2 * j + 1)] = rot[(i, j)];
    }

    let mut modal = Matrix4::zeros();
    for (blk, kern) in [(0usize, mx.m1), (1, mx.m2)] {
        let o = 2 * blk;
        modal[(o, o)] = kern.c;
        modal[(o, o + 1)] = kern.s;
        modal[(o + 1, o)] = kern.k * kern.s;
        modal[(o + 1, o + 1)] = kern.c;
    }

    let (ms, me) = (modes.m_s.sqrt(), modes.m_e.sqrt());
    let scale = Matrix4::from_diagonal(&nalgebra::Vector4::new(ms, 1.0 / ms, me, 1.0 / me));
    let unscale = Matrix4::from_diagonal(&nalgebra::Vector4::new(1.0 / ms, ms, 1.0 / me, me));

    unscale * r4.transpose() * modal * r4 * scale
}

/// `M_i` block for degree of freedom with mass `m_i`.
fn m_block(m_i: f64, m_s: f64, phi: f64, dphi: f64, d2phi: f64) -> Matrix2<f64> {
    Matrix2::new((m_i / m_s).sqrt() * dphi, phi / (m_i * m_s).sqrt(), (m_i * m_s).sqrt() * d2phi, (m_s / m_i).sqrt() * dphi)
}

fn embed_rows(m0: Matrix2<f64>, m1: Matrix2<f64>, lower: Matrix2<f64>) -> Matrix4<f64> {
    let mut out = Matrix4::zeros();
    out.fixed_view_mut::<2, 2>(0, 0).copy_from(&m0);
    out.fixed_view_mut::<2, 2>(0, 2).copy_from(&m1);
    out.fixed_view_mut::<2, 2>(2, 2).copy_from(&lower);
    out
}

/// Partial-knowledge matrix: rows 1-2 are `[M_0 M_1]`, rows 3-4 the identity.
pub fn tp_matrix(modes: &NormalModes, t: f64) -> Matrix4<f64> {
    let f = mode_functions(modes, t);
    let ms = modes.m_s;
    embed_rows(m_block(ms, ms, f.phi0, f.dphi0, f.d2phi0), m_block(modes.m_e, ms, f.phi1, f.dphi1, f.d2phi1), Matrix2::identity())
}

/// Time derivative of `T_p`; rows 3-4 vanish.
pub fn tp_dot(modes: &NormalModes, t: f64) -> Matrix4<f64> {
    let f = mode_functions(modes, t);
    let ms = modes.m_s;
    embed_rows(m_block(ms, ms, f.dphi0, f.d2phi0, f.d3phi0), m_block(modes.m_e, ms, f.dphi1, f.d2phi1, f.d3phi1), Matrix2::zeros())
}

/// Dimensionless determinant of the upper-left block of `T_p` (1 at `t = 0`).
pub fn dtilde(modes: &NormalModes, t: f64) -> f64 {
    Mixing::new(modes, t).dtilde()
}

/// `omega * lambda * D~`, the common denominator of the closed-form coefficients.
pub fn d_paper(modes: &NormalModes, t: f64) -> f64 {
    modes.omega * modes.lambda() * dtilde(modes, t)
}

/// Inverse of `T_p` from the `D_ij` cofactors of its first two rows.
pub fn tp_inverse(tp: &Matrix4<f64>, guard: f64) -> Result<Matrix4<f64>> {
    let d12 = tp[(0, 0)] * tp[(1, 1)] - tp[(0, 1)] * tp[(1, 0)];
    cofactor_inverse(tp, d12, guard, f64::NAN)
}

fn cofactor_inverse(tp: &Matrix4<f64>, d12: f64, guard: f64, t: f64) -> Result<Matrix4<f64>> {
    if !(d12.abs() > guard) {
        return Err(Error::SingularAtDivergence { t, dtilde: d12 });
    }
    let minor = |i: usize, j: usize| tp[(0, i)] * tp[(1, j)] - tp[(0, j)] * tp[(1, i)];
    let mut inv = Matrix4::zeros();
    inv[(0, 0)] = tp[(1, 1)];
    inv[(0, 1)] = -tp[(0, 1)];
    inv[(1, 0)] = -tp[(1, 0)];
    inv[(1, 1)] = tp[(0, 0)];
    for j in 2..4 {
        inv[(0, j)] = minor(1, j);
        inv[(1, j)] = -minor(0, j);
        inv[(j, j)] = d12;
    }
    Ok(inv / d12)
}

/// `dT_p/dt * T_p^-1`.
pub fn drift_matrix(modes: &NormalModes, t: f64, guard: f64) -> Result<Matrix4<f64>> {
    let pm = PropagatorMatrices::new(modes, t);
    let inv = pm.tp_inverse(guard)?;
    Ok(tp_dot(modes, t) * inv)
}

/// Canonical symplectic form for `[x, p, y, q]`.
pub fn symplectic_form() -> Matrix4<f64> {
    let mut j = Matrix4::zeros();
    j[(0, 1)] = 1.0;
    j[(1, 0)] = -1.0;
    j[(2, 3)] = 1.0;
    j[(3, 2)] = -1.0;
    j
}
