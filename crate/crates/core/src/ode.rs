//! Adaptive Dormand-Prince 5(4) stepping for small dense systems.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepControl {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_step: f64,
    pub max_steps: usize,
}

impl Default for StepControl {
    fn default() -> Self {
        Self { rel_tol: 1e-10, abs_tol: 1e-12, max_step: f64::INFINITY, max_steps: 1_000_000 }
    }
}

const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
// Fifth-order weights are the last row of A (FSAL); these are 5th minus 4th.
const E: [f64; 7] = [71.0 / 57600.0, 0.0, -71.0 / 16695.0, 71.0 / 1920.0, -17253.0 / 339200.0, 22.0 / 525.0, -1.0 / 40.0];

/// Stateful integrator carrying the step size between calls.
#[derive(Debug, Clone)]
pub struct Dopri5<const N: usize> {
    pub control: StepControl,
    pub t: f64,
    pub y: [f64; N],
    h: f64,
    pub steps: usize,
    pub rejected: usize,
}

impl<const N: usize> Dopri5<N> {
    pub fn new(control: StepControl, t0: f64, y0: [f64; N]) -> Self {
        Self { control, t: t0, y: y0, h: 0.0, steps: 0, rejected: 0 }
    }

    /// Restart from a new state, keeping statistics.
    pub fn reset(&mut self, t: f64, y: [f64; N]) {
        self.t = t;
        self.y = y;
        self.h = 0.0;
    }

    fn initial_step<F>(&self, f: &mut F, f0: &[f64; N], span: f64) -> Result<f64>
    where
        F: FnMut(f64, &[f64; N]) -> Result<[f64; N]>,
    {
        let sc = |y: f64| self.control.abs_tol + self.control.rel_tol * y.abs();
        let norm = |v: &[f64; N], w: &[f64; N]| (v.iter().zip(w).map(|(a, b)| (a / sc(*b)).powi(2)).sum::<f64>() / N as f64).sqrt();
        let d0 = norm(&self.y, &self.y);
        let d1 = norm(f0, &self.y);
        let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
        let h0 = h0.min(span);
        let mut y1 = self.y;
        for i in 0..N {
            y1[i] += h0 * f0[i];
        }
        let f1 = f(self.t + h0, &y1)?;
        let mut diff = [0.0; N];
        for i in 0..N {
            diff[i] = f1[i] - f0[i];
        }
        let d2 = norm(&diff, &self.y) / h0;
        let h1 = if d1.max(d2) <= 1e-15 { (h0 * 1e-3).max(1e-6) } else { (0.01 / d1.max(d2)).powf(0.2) };
        Ok((100.0 * h0).min(h1).min(span).min(self.control.max_step))
    }

    /// Advance exactly to `t_end`.
    pub fn advance_to<F>(&mut self, f: &mut F, t_end: f64) -> Result<()>
    where
        F: FnMut(f64, &[f64; N]) -> Result<[f64; N]>,
    {
        if t_end <= self.t {
            return Ok(());
        }
        let mut k = [[0.0; N]; 7];
        k[0] = f(self.t, &self.y)?;
        if self.h <= 0.0 {
            self.h = self.initial_step(f, &k[0], t_end - self.t)?;
        }
        let mut taken = 0usize;
        while self.t < t_end {
            if taken >= self.control.max_steps {
                return Err(Error::StepFailure { t: self.t, reason: "step budget exhausted".into() });
            }
            let remaining = t_end - self.t;
            let mut h = self.h.min(self.control.max_step);
            let last = h >= remaining * (1.0 - 1e-12);
            if last {
                h = remaining;
            }
            if h <= 1e-14 * self.t.abs().max(1.0) {
                return Err(Error::StepFailure { t: self.t, reason: format!("step size underflow (h = {h:e})") });
            }

            for s in 1..7 {
                let mut ys = self.y;
                for (j, kj) in k.iter().enumerate().take(s) {
                    let a = A[s][j];
                    if a != 0.0 {
                        for i in 0..N {
                            ys[i] += h * a * kj[i];
                        }
                    }
                }
                k[s] = f(self.t + C[s] * h, &ys)?;
            }
            let mut y_new = self.y;
            for (j, kj) in k.iter().enumerate().take(6) {
                for i in 0..N {
                    y_new[i] += h * A[6][j] * kj[i];
                }
            }
            // k[6] was evaluated at y_new (FSAL).
            let mut err = 0.0;
            for i in 0..N {
                let e: f64 = h * (0..7).map(|s| E[s] * k[s][i]).sum::<f64>();
                let sc = self.control.abs_tol + self.control.rel_tol * self.y[i].abs().max(y_new[i].abs());
                err += (e / sc).powi(2);
            }
            let err = (err / N as f64).sqrt();
            if !err.is_finite() {
                self.rejected += 1;
                self.h = h * 0.2;
                continue;
            }
            let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
            if err <= 1.0 {
                self.t = if last { t_end } else { self.t + h };
                self.y = y_new;
                k[0] = k[6];
                self.steps += 1;
                taken += 1;
                if !last || factor < 1.0 {
                    self.h = h * factor;
                }
            } else {
                self.rejected += 1;
                self.h = h * factor.min(1.0);
            }
        }
        Ok(())
    }
}
