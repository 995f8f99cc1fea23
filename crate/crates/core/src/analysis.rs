//! Critical-time estimates, divergence location, short-time approximations and
//! fits of entropy trajectories.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evolution::Trajectory;
use crate::modes::NormalModes;
use crate::propagator::dtilde;

fn check_tc_domain(lambda: f64, theta_c: f64) -> Result<()> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Error::Domain { what: "lambda (> 0)", value: lambda });
    }
    if !(theta_c.abs() > 0.0 && theta_c.abs() < 1.0) {
        return Err(Error::Domain { what: "theta_c (0 < |theta_c| < 1)", value: theta_c });
    }
    Ok(())
}

/// `-2 ln|theta|/lambda + ln(omega lambda/(omega^2 + lambda^2))`, second term
/// without a `1/lambda`.
pub fn critical_time_paper(omega: f64, lambda: f64, theta_c: f64) -> Result<f64> {
    check_tc_domain(lambda, theta_c)?;
    Ok(-2.0 * theta_c.abs().ln() / lambda + (omega * lambda / (omega * omega + lambda * lambda)).ln())
}

/// Time at which the growing term of the small-coupling expansion of `D~`
/// reaches unit amplitude.
pub fn critical_time_derived(omega: f64, lambda: f64, theta_c: f64) -> Result<f64> {
    check_tc_domain(lambda, theta_c)?;
    Ok((-2.0 * theta_c.abs().ln() + (2.0 * omega * lambda / (omega * omega + lambda * lambda)).ln()) / lambda)
}

fn scan_step(modes: &NormalModes, t_max: f64) -> f64 {
    let mut step = t_max / 64.0;
    if modes.omega > 0.0 {
        step = step.min(std::f64::consts::PI / (8.0 * modes.omega));
    }
    let rate = modes.lambda_sq.abs().sqrt();
    if rate > 0.0 {
        step = step.min(if modes.lambda_sq > 0.0 { 1.0 / (8.0 * rate) } else { std::f64::consts::PI / (8.0 * rate) });
    }
    step
}

fn bisect<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let mut flo = f(lo);
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        let fm = f(mid);
        if fm == 0.0 {
            return mid;
        }
        if (fm > 0.0) == (flo > 0.0) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn scan(modes: &NormalModes, t_max: f64) -> Vec<(f64, f64)> {
    let step = scan_step(modes, t_max);
    let n = (t_max / step).ceil() as usize;
    (0..=n)
        .map(|i| {
            let t = (i as f64 * step).min(t_max);
            (t, dtilde(modes, t))
        })
        .collect()
}

/// Sign changes of `D~` on `[0, t_max]`, refined by bisection to `1e-10`.
pub fn find_divergences(modes: &NormalModes, t_max: f64) -> Vec<f64> {
    if !(t_max > 0.0) {
        return Vec::new();
    }
    let samples = scan(modes, t_max);
    let f = |t: f64| dtilde(modes, t);
    samples
        .windows(2)
        .filter_map(|w| {
            let ((t0, d0), (t1, d1)) = (w[0], w[1]);
            if d1 == 0.0 {
                Some(t1)
            } else if d0 != 0.0 && (d0 > 0.0) != (d1 > 0.0) {
                Some(bisect(f, t0, t1, 1e-10))
            } else {
                None
            }
        })
        .collect()
}

/// Closed intervals of `[0, t_max]` (and a little beyond) on which `|D~| <= delta`.
pub fn guard_intervals(modes: &NormalModes, t_max: f64, delta: f64) -> Vec<[f64; 2]> {
    if !(t_max > 0.0) {
        return Vec::new();
    }
    let step = scan_step(modes, t_max);
    let samples = scan(modes, t_max + 2.0 * step);
    let f = |t: f64| dtilde(modes, t);
    let g = |t: f64| f(t).abs() - delta;
    let is_bad = |d: f64| d.abs() <= delta;

    let mut out: Vec<[f64; 2]> = Vec::new();
    let mut i = 0;
    while i + 1 < samples.len() {
        let (t0, d0) = samples[i];
        let (t1, d1) = samples[i + 1];
        let crosses = (d0 > 0.0) != (d1 > 0.0);
        if !(is_bad(d0) || is_bad(d1) || crosses) {
            i += 1;
            continue;
        }
        // Left edge.
        let first_inside = if is_bad(d0) {
            t0
        } else if is_bad(d1) {
            t1
        } else {
            bisect(f, t0, t1, 1e-12)
        };
        let lo = if is_bad(d0) { t0 } else { bisect(g, t0, first_inside, 1e-12) };
        // Extend through consecutive offending pairs.
        let mut j = i;
        while j + 1 < samples.len() {
            let (a, b) = (samples[j].1, samples[j + 1].1);
            let offending = is_bad(a) || is_bad(b) || (a > 0.0) != (b > 0.0);
            if !offending {
                break;
            }
            j += 1;
        }
        let (ta, da) = samples[j.saturating_sub(1)];
        let (tb, db) = samples[j];
        let last_inside = if is_bad(db) {
            tb
        } else if is_bad(da) {
            ta
        } else {
            bisect(f, ta, tb, 1e-12)
        };
        let hi = if is_bad(db) { tb } else { bisect(g, last_inside, tb, 1e-12) };
        out.push([lo, hi]);
        i = j.max(i + 1);
    }
    out.retain(|iv| iv[0] <= t_max);
    out
}

/// First-order small-coupling expansion of `D~` in its reference form (no 1/2 on the correction).
pub fn approx_d(omega: f64, lambda: f64, theta_c: f64, t: f64) -> f64 {
    let (s, c) = (omega * t).sin_cos();
    1.0 + theta_c * theta_c * (lambda * t).exp() * ((omega * omega - lambda * lambda) * s + 2.0 * omega * lambda * c) / (omega * lambda)
}

/// Short-time order-of-magnitude estimate of `f1`.
pub fn approx_f1(modes: &NormalModes, t: f64) -> Result<f64> {
    if !(modes.lambda_sq > 0.0) {
        return Err(Error::Domain { what: "lambda^2 (> 0)", value: modes.lambda_sq });
    }
    let l = modes.lambda();
    let th = modes.theta_c;
    Ok(modes.m_s * th * th * (modes.omega.powi(2) + modes.lambda_sq) * (2.0 * l * t).exp() / (modes.m_e * modes.hbar * modes.hbar))
}

/// `kappa = sqrt(m_s (omega^2 + lambda^2) / m_e) / hbar`.
pub fn kappa_default(modes: &NormalModes) -> f64 {
    (modes.m_s * (modes.omega.powi(2) + modes.lambda_sq) / modes.m_e).sqrt() / modes.hbar
}

/// `(S_d - ln(kappa dx2) - ln|theta|)/lambda`.
pub fn decoherence_time(s_d: f64, kappa: f64, dx2: f64, theta_c: f64, lambda: f64) -> Result<f64> {
    if !(lambda > 0.0) {
        return Err(Error::Domain { what: "lambda (> 0)", value: lambda });
    }
    Ok((s_d - (kappa * dx2).ln() - theta_c.abs().ln()) / lambda)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    /// `||residual|| / ||S||` over the samples used.
    pub rel_residual: f64,
    pub window: [f64; 2],
    pub samples: usize,
}

/// Restrict `window` to a whole number of modulation periods `pi/omega`.
///
/// The reduced covariance returns to the same shape every half period of the
/// stable mode, so this is the period of the entropy modulation.
pub fn whole_period_window(window: [f64; 2], omega: f64) -> Result<[f64; 2]> {
    let [a, b] = window;
    if !(b > a) {
        return Err(Error::WindowTooShort { start: a, end: b, needed: 3 });
    }
    if omega <= 1e-9 {
        return Ok(window);
    }
    let period = std::f64::consts::PI / omega;
    let n = ((b - a) / period * (1.0 + 1e-12)).floor();
    if n < 3.0 {
        return Err(Error::WindowTooShort { start: a, end: b, needed: 3 });
    }
    Ok([a, (a + n * period).min(b)])
}

fn least_squares(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let res: f64 = xs.iter().zip(ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    let norm: f64 = ys.iter().map(|y| y * y).sum();
    (slope, intercept, if norm > 0.0 { (res / norm).sqrt() } else { res.sqrt() })
}

fn window_samples(times: &[f64], values: &[f64], w: [f64; 2], tol: f64) -> (Vec<f64>, Vec<f64>) {
    times.iter().zip(values).filter(|(t, _)| **t >= w[0] - tol && **t <= w[1] + tol).map(|(t, v)| (*t, *v)).unzip()
}

/// Least-squares line through `S(t)` over whole modulation periods of `window`.
pub fn fit_line(times: &[f64], s: &[f64], window: [f64; 2], omega: f64) -> Result<LineFit> {
    let w = whole_period_window(window, omega)?;
    let (xs, ys) = window_samples(times, s, w, 1e-9 * w[1].abs().max(1.0));
    if xs.len() < 3 {
        return Err(Error::WindowTooShort { start: window[0], end: window[1], needed: 3 });
    }
    let (slope, intercept, rel_residual) = least_squares(&xs, &ys);
    Ok(LineFit { slope, intercept, rel_residual, window: w, samples: xs.len() })
}

/// Linear entropy fit of a trajectory, returning the slope and intercept `S0`.
pub fn fit_entropy_line(traj: &Trajectory, window: [f64; 2], omega: f64) -> Result<LineFit> {
    fit_line(&traj.times, &traj.entropy(), window, omega)
}

/// Least-squares `S = c0 + c1 ln t`; `slope` holds `c1`, `intercept` holds `c0`.
pub fn fit_log(times: &[f64], s: &[f64], window: [f64; 2], omega: f64) -> Result<LineFit> {
    let w = whole_period_window(window, omega)?;
    let (xs, ys) = window_samples(times, s, w, 1e-9 * w[1].abs().max(1.0));
    let (xs, ys): (Vec<f64>, Vec<f64>) = xs.iter().zip(&ys).filter(|(t, _)| **t > 0.0).map(|(t, y)| (t.ln(), *y)).unzip();
    if xs.len() < 3 {
        return Err(Error::WindowTooShort { start: window[0], end: window[1], needed: 3 });
    }
    let (slope, intercept, rel_residual) = least_squares(&xs, &ys);
    Ok(LineFit { slope, intercept, rel_residual, window: w, samples: xs.len() })
}

pub fn fit_entropy_log(traj: &Trajectory, window: [f64; 2], omega: f64) -> Result<LineFit> {
    fit_log(&traj.times, &traj.entropy(), window, omega)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub t_c_paper: Option<f64>,
    pub t_c_derived: Option<f64>,
    pub divergence_times: Vec<f64>,
    pub kappa: Option<f64>,
    pub s0: Option<f64>,
    pub slope: Option<f64>,
    pub t_d: Option<f64>,
    pub s_d: f64,
}

/// Collect the estimates for one configuration. Fields that do not apply
/// (e.g. critical times for a stable environment) are `None`.
pub fn analyze(modes: &NormalModes, traj: Option<&Trajectory>, t_max: f64, window: [f64; 2], s_d: f64, dx2: f64) -> AnalysisReport {
    let l = modes.lambda();
    let inverted = modes.lambda_sq > 0.0;
    let fit = traj.and_then(|tr| fit_entropy_line(tr, window, modes.omega).ok());
    let kappa = inverted.then(|| kappa_default(modes));
    AnalysisReport {
        t_c_paper: critical_time_paper(modes.omega, l, modes.theta_c).ok(),
        t_c_derived: critical_time_derived(modes.omega, l, modes.theta_c).ok(),
        divergence_times: find_divergences(modes, t_max),
        kappa,
        s0: fit.map(|f| f.intercept),
        slope: fit.map(|f| f.slope),
        t_d: kappa.and_then(|k| decoherence_time(s_d, k, dx2, modes.theta_c, l).ok()),
        s_d,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::{LN_2, PI};

    #[test]
    fn critical_time_examples() {
        let d = critical_time_derived(1.0, 1.0, PI / 64.0).unwrap();
        let p = critical_time_paper(1.0, 1.0, PI / 64.0).unwrap();
        assert_relative_eq!(d, -2.0 * (PI / 64.0).ln(), max_relative = 1e-15);
        assert_relative_eq!(d, 6.0283, epsilon = 1e-4);
        assert_relative_eq!(p, d + 0.5f64.ln(), max_relative = 1e-14);
        let e2 = std::f64::consts::E.powi(2);
        assert_relative_eq!(
            critical_time_paper(1.3, 0.7, 0.01 / e2).unwrap() - critical_time_paper(1.3, 0.7, 0.01).unwrap(),
            4.0 / 0.7,
            max_relative = 1e-12
        );
        assert_relative_eq!(
            critical_time_derived(1.0, 2.0, 0.05).unwrap() * 2.0,
            critical_time_derived(0.5, 1.0, 0.05).unwrap(),
            max_relative = 1e-12
        );
        assert!(critical_time_paper(1.0, 0.0, 0.1).is_err());
        assert!(critical_time_derived(1.0, 1.0, 0.0).is_err());
        assert!(critical_time_derived(1.0, 1.0, 1.5).is_err());
    }

    #[test]
    fn divergences_examples() {
        let m = NormalModes::unit(1.0, 1.0, 0.0).unwrap();
        assert!(find_divergences(&m, 100.0).is_empty());
        let m = NormalModes::unit(1.0, 1.0, PI / 64.0).unwrap();
        let roots = find_divergences(&m, 30.0);
        let tc = critical_time_derived(1.0, 1.0, PI / 64.0).unwrap();
        assert!(roots[0] >= tc - 0.5);
        assert!(roots.windows(2).all(|w| w[1] > w[0]));
        for r in &roots {
            assert!(dtilde(&m, *r).abs() < 1e-7 * (1.0 + (r).exp() * 1e-3));
        }
    }

    #[test]
    fn stable_environment_against_dense_scan() {
        let m = NormalModes::unit(1.0, -16.0, PI / 10.0).unwrap();
        let roots = find_divergences(&m, 50.0);
        let n = 500_000;
        let mut dense = 0;
        let mut prev = dtilde(&m, 0.0);
        for i in 1..=n {
            let d = dtilde(&m, 50.0 * i as f64 / n as f64);
            if (d > 0.0) != (prev > 0.0) {
                dense += 1;
            }
            prev = d;
        }
        assert_eq!(roots.len(), dense);
    }

    #[test]
    fn guard_intervals_bracket_roots() {
        let m = NormalModes::unit(1.0, 1.0, PI / 64.0).unwrap();
        let roots = find_divergences(&m, 20.0);
        let iv = guard_intervals(&m, 20.0, 1e-3);
        assert_eq!(iv.len(), roots.len());
        for (r, [lo, hi]) in roots.iter().zip(&iv) {
            assert!(lo < r && r < hi);
            assert!((dtilde(&m, *lo).abs() - 1e-3).abs() < 1e-7);
            assert!((dtilde(&m, *hi).abs() - 1e-3).abs() < 1e-7);
            let mid = 0.5 * (lo + r);
            assert!(dtilde(&m, mid).abs() <= 1e-3);
        }
        let m = NormalModes::unit(1.0, 1.0, 0.0).unwrap();
        assert!(guard_intervals(&m, 20.0, 1e-3).is_empty());
    }

    #[test]
    fn approx_d_examples() {
        for &t in &[0.5, 3.0, 7.0] {
            assert_relative_eq!(approx_d(1.0, 1.0, 1e-9, t), 1.0, epsilon = 1e-14);
        }
        // Oscillation removed, the correction grows like e^{lambda t}.
        let corr = |t: f64| approx_d(1.0, 1.0, 1e-3, t) - 1.0;
        let period = 2.0 * PI;
        assert_relative_eq!(corr(3.0 + period) / corr(3.0), period.exp(), max_relative = 1e-9);
    }

    #[test]
    fn approx_f1_examples() {
        let m = NormalModes::new(1.0, 1.0, 0.02, 1.0, 1e-3, 1.0).unwrap();
        assert_relative_eq!(approx_f1(&m.with_theta(0.04), 3.0).unwrap(), 4.0 * approx_f1(&m, 3.0).unwrap(), max_relative = 1e-14);
        let slope = (approx_f1(&m, 4.0).unwrap().ln() - approx_f1(&m, 3.0).unwrap().ln()) / 1.0;
        assert_relative_eq!(slope, 2.0, max_relative = 1e-12);
        assert!(approx_f1(&NormalModes::unit(1.0, -1.0, 0.1).unwrap(), 1.0).is_err());
    }

    #[test]
    fn decoherence_time_examples() {
        let t = decoherence_time(LN_2, 1.0, 1.0, PI / 64.0, 1.0).unwrap();
        assert_relative_eq!(t, LN_2 + (64.0 / PI).ln(), max_relative = 1e-14);
        assert_relative_eq!(t, 3.7073, epsilon = 1e-4);
        assert_relative_eq!(decoherence_time(LN_2, 1.0, 1.0, PI / 64.0, 2.0).unwrap(), t / 2.0, max_relative = 1e-14);
        let th = 0.03;
        assert_relative_eq!(
            decoherence_time(1.0, 2.0, 0.5, th / std::f64::consts::E, 0.8).unwrap() - decoherence_time(1.0, 2.0, 0.5, th, 0.8).unwrap(),
            1.0 / 0.8,
            max_relative = 1e-12
        );
        assert!(decoherence_time(1.0, 1.0, 1.0, 0.1, 0.0).is_err());
    }

    #[test]
    fn synthetic_fits() {
        let ts: Vec<f64> = (0..=400).map(|i| 0.05 * i as f64).collect();
        let s: Vec<f64> = ts.iter().map(|t| 0.7 * t - 1.25).collect();
        let f = fit_line(&ts, &s, [5.0, 15.0], 1.0).unwrap();
        assert_relative_eq!(f.slope, 0.7, max_relative = 1e-12);
        assert_relative_eq!(f.intercept, -1.25, max_relative = 1e-12);
        assert!(f.window[1] <= 15.0 && (f.window[1] - 5.0 - 3.0 * PI).abs() < 1e-12);

        let s: Vec<f64> = ts.iter().map(|t| 0.3 + 1.5 * t.max(1e-300).ln()).collect();
        let f = fit_log(&ts, &s, [2.0, 20.0], 1.0).unwrap();
        assert_relative_eq!(f.slope, 1.5, max_relative = 1e-12);
        assert_relative_eq!(f.intercept, 0.3, max_relative = 1e-11);
        assert!(f.rel_residual < 1e-12);

        assert!(matches!(fit_line(&ts, &s, [5.0, 9.0], 1.0), Err(Error::WindowTooShort { .. })));
        assert!(fit_line(&ts, &s, [5.0, 9.0], 0.0).is_ok());
    }
}
