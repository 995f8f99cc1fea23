//! Command-line front end: JSON configuration in, CSV and JSON reports out.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, ValueEnum};
use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize};

use crate::analysis::{self, AnalysisReport, LineFit};
use crate::coefficients::{self, MECoefficients};
use crate::error::Error;
use crate::evolution::{self, InitialState, IntegratorOptions, Moments, Trajectory};
use crate::gaussian::SqueezeSpec;
use crate::modes::{self, NormalModes, SupersystemParams};
use crate::propagator;

/// Tolerance of the closed-vs-general coefficient comparison.
pub const DUAL_TOLERANCE: f64 = 1e-9;
/// Tolerance of the master-equation vs exact comparison before the first root.
pub const ORACLE_TOLERANCE: f64 = 1e-6;
/// Coefficients are only compared where `|D~|` exceeds this.
pub const DUAL_MIN_DTILDE: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Command {
    Modes,
    Coeffs,
    Evolve,
    Divergences,
    Scan,
    Verify,
}

#[derive(Debug, Parser)]
#[command(name = "invharm", version, about = "Oscillator coupled to an inverted-oscillator environment")]
pub struct Args {
    #[arg(value_enum)]
    pub command: Command,
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory; reports go to stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Parameter swept by `scan`.
    #[arg(long)]
    pub vary: Option<String>,
    /// Comma-separated values for `--vary`; `pi` expressions allowed.
    #[arg(long)]
    pub values: Option<String>,
}

// ---------------------------------------------------------------- numbers

/// Parse a number or a `pi` expression such as `pi/64`, `-2*pi`, `3pi/4`.
pub fn parse_number(text: &str) -> Option<f64> {
    let s: String = text.chars().filter(|c| !c.is_whitespace()).collect();
    if let Ok(v) = s.parse::<f64>() {
        return Some(v);
    }
    let lower = s.to_ascii_lowercase();
    let (num, den) = match lower.split_once('/') {
        Some((n, d)) => (n, Some(d.parse::<f64>().ok()?)),
        None => (lower.as_str(), None),
    };
    let coef = num.strip_suffix("pi")?;
    let coef = coef.strip_suffix('*').unwrap_or(coef);
    let k = match coef {
        "" | "+" => 1.0,
        "-" => -1.0,
        c => c.parse::<f64>().ok()?,
    };
    let v = k * std::f64::consts::PI / den.unwrap_or(1.0);
    v.is_finite().then_some(v)
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RawNumber {
    Float(f64),
    Text(String),
}

fn num<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    match RawNumber::deserialize(d)? {
        RawNumber::Float(v) => Ok(v),
        RawNumber::Text(s) => parse_number(&s).ok_or_else(|| serde::de::Error::custom(format!("not a number: {s:?}"))),
    }
}

fn num_pair<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<[f64; 2], D::Error> {
    let raw = <[RawNumber; 2]>::deserialize(d)?;
    let mut out = [0.0; 2];
    for (o, r) in out.iter_mut().zip(raw) {
        *o = match r {
            RawNumber::Float(v) => v,
            RawNumber::Text(s) => parse_number(&s).ok_or_else(|| serde::de::Error::custom(format!("not a number: {s:?}")))?,
        };
    }
    Ok(out)
}

// ---------------------------------------------------------------- config

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BareConfig {
    #[serde(default = "one", deserialize_with = "num")]
    pub m_s: f64,
    #[serde(default = "one", deserialize_with = "num")]
    pub m_e: f64,
    #[serde(deserialize_with = "num")]
    pub omega_bare: f64,
    #[serde(deserialize_with = "num")]
    pub lambda_sq_bare: f64,
    #[serde(deserialize_with = "num")]
    pub g: f64,
    #[serde(default = "one", deserialize_with = "num")]
    pub hbar: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModesConfig {
    #[serde(deserialize_with = "num")]
    pub omega: f64,
    #[serde(deserialize_with = "num")]
    pub lambda_sq: f64,
    #[serde(deserialize_with = "num")]
    pub theta_c: f64,
    #[serde(deserialize_with = "num")]
    pub m_s: f64,
    #[serde(deserialize_with = "num")]
    pub m_e: f64,
    #[serde(deserialize_with = "num")]
    pub hbar: f64,
}

impl Default for ModesConfig {
    fn default() -> Self {
        Self { omega: 1.0, lambda_sq: 1.0, theta_c: std::f64::consts::PI / 64.0, m_s: 1.0, m_e: 1.0, hbar: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SqueezeConfig {
    #[serde(deserialize_with = "num")]
    pub r: f64,
    #[serde(default, deserialize_with = "num")]
    pub angle: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    #[serde(deserialize_with = "num")]
    pub t_max: f64,
    pub samples: Option<usize>,
    pub dt: Option<f64>,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { t_max: 20.0, samples: None, dt: None }
    }
}

pub const DEFAULT_SAMPLES: usize = 2001;

impl GridConfig {
    pub fn times(&self) -> Result<Vec<f64>, Error> {
        if !(self.t_max.is_finite() && self.t_max > 0.0) {
            return Err(Error::InvalidParameter { name: "t_max", reason: format!("must be finite and > 0, got {}", self.t_max) });
        }
        let n = match (self.samples, self.dt) {
            (Some(_), Some(_)) => {
                return Err(Error::InvalidParameter { name: "grid", reason: "give either samples or dt, not both".into() })
            }
            (Some(n), None) if n >= 2 => n,
            (Some(n), None) => return Err(Error::InvalidParameter { name: "samples", reason: format!("need at least 2, got {n}") }),
            (None, Some(dt)) if dt.is_finite() && dt > 0.0 && dt <= self.t_max => (self.t_max / dt).round() as usize + 1,
            (None, Some(dt)) => return Err(Error::InvalidParameter { name: "dt", reason: format!("must be in (0, t_max], got {dt}") }),
            (None, None) => DEFAULT_SAMPLES,
        };
        Ok(evolution::uniform_grid(self.t_max, n))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    #[default]
    Exact,
    Me,
    Compare,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    #[default]
    Csv,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    pub format: Format,
}

fn default_system() -> SqueezeConfig {
    SqueezeConfig { r: 4.0, angle: 0.0 }
}

fn default_environment() -> SqueezeConfig {
    SqueezeConfig { r: 2.0, angle: 0.0 }
}

fn default_window() -> [f64; 2] {
    [5.0, 15.0]
}

fn default_s_d() -> f64 {
    std::f64::consts::LN_2
}

/// Everything one run needs. Without `bare` or `modes` the base mode
/// parameters are used.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bare: Option<BareConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub modes: Option<ModesConfig>,
    #[serde(default = "default_system")]
    pub system: SqueezeConfig,
    #[serde(default = "default_environment")]
    pub environment: SqueezeConfig,
    #[serde(default)]
    pub system_mean: [f64; 2],
    #[serde(default)]
    pub environment_mean: [f64; 2],
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub integrator: IntegratorOptions,
    #[serde(default)]
    pub method: Method,
    #[serde(default = "default_window", deserialize_with = "num_pair")]
    pub fit_window: [f64; 2],
    /// Target entropy for the decoherence-time estimate.
    #[serde(default = "default_s_d", deserialize_with = "num")]
    pub s_d: f64,
    #[serde(default)]
    pub output: OutputConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("defaults")
    }
}

/// A validated configuration.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub modes: NormalModes,
    pub bare: Option<SupersystemParams>,
    pub init: InitialState,
    pub grid: Vec<f64>,
    pub opts: IntegratorOptions,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::validation(format!("config: {e}")))
    }

    pub fn resolve(&self) -> Result<Resolved, Error> {
        let (modes, bare) = match (&self.bare, &self.modes) {
            (Some(_), Some(_)) => {
                return Err(Error::InvalidParameter { name: "config", reason: "give either `bare` or `modes`, not both".into() })
            }
            (Some(b), None) => {
                let p = SupersystemParams {
                    m_s: b.m_s,
                    m_e: b.m_e,
                    omega_bare: b.omega_bare,
                    lambda_sq_bare: b.lambda_sq_bare,
                    g: b.g,
                    hbar: b.hbar,
                };
                (modes::derive_modes(&p)?, Some(p))
            }
            (None, m) => {
                let m = m.unwrap_or_default();
                let modes = NormalModes::new(m.omega, m.lambda_sq, m.theta_c, m.m_s, m.m_e, m.hbar)?;
                (modes, modes::params_for(&modes).ok())
            }
        };
        let mut init = InitialState::new(
            SqueezeSpec::new(self.system.r, self.system.angle)?,
            SqueezeSpec::new(self.environment.r, self.environment.angle)?,
        );
        init.sys_mean = self.system_mean;
        init.env_mean = self.environment_mean;
        init.validate()?;
        self.integrator.validate()?;
        if !(self.fit_window[0].is_finite() && self.fit_window[1] > self.fit_window[0]) {
            return Err(Error::InvalidParameter { name: "fit_window", reason: format!("{:?} is not an interval", self.fit_window) });
        }
        crate::error::check_finite("s_d", self.s_d)?;
        Ok(Resolved { modes, bare, init, grid: self.grid.times()?, opts: self.integrator })
    }

    /// Overwrite one named parameter, as used by `scan`.
    pub fn set(&mut self, name: &str, value: f64) -> Result<(), Error> {
        let unknown = || Error::InvalidParameter { name: "vary", reason: format!("unknown or inapplicable parameter `{name}`") };
        match name {
            "r_s" => self.system.r = value,
            "r_e" => self.environment.r = value,
            "angle_s" => self.system.angle = value,
            "angle_e" => self.environment.angle = value,
            "t_max" => self.grid.t_max = value,
            "s_d" => self.s_d = value,
            _ => {
                if let Some(b) = self.bare.as_mut() {
                    match name {
                        "m_s" => b.m_s = value,
                        "m_e" => b.m_e = value,
                        "omega_bare" => b.omega_bare = value,
                        "lambda_sq_bare" => b.lambda_sq_bare = value,
                        "g" => b.g = value,
                        "hbar" => b.hbar = value,
                        _ => return Err(unknown()),
                    }
                } else {
                    let m = self.modes.get_or_insert_with(ModesConfig::default);
                    match name {
                        "omega" => m.omega = value,
                        "lambda_sq" => m.lambda_sq = value,
                        "theta_c" => m.theta_c = value,
                        "m_s" => m.m_s = value,
                        "m_e" => m.m_e = value,
                        "hbar" => m.hbar = value,
                        _ => return Err(unknown()),
                    }
                }
            }
        }
        Ok(())
    }
}

// ---------------------------------------------------------------- errors

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorKind {
    Validation,
    Verification,
    Numerical,
}

impl ErrorKind {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorKind::Validation => 1,
            ErrorKind::Verification => 2,
            ErrorKind::Numerical => 3,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CliError {
    pub error: ErrorKind,
    pub message: String,
}

impl CliError {
    pub fn validation(message: impl Into<String>) -> Self {
        Self { error: ErrorKind::Validation, message: message.into() }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let error = match e {
            Error::SingularAtDivergence { .. } | Error::StepFailure { .. } => ErrorKind::Numerical,
            _ => ErrorKind::Validation,
        };
        Self { error, message: e.to_string() }
    }
}

// ---------------------------------------------------------------- output

/// Fixed CSV float format: 17 significant digits.
pub fn fmt_float(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else if x.is_nan() {
        "NaN".into()
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

fn csv_row(out: &mut String, values: impl IntoIterator<Item = f64>) {
    let row: Vec<String> = values.into_iter().map(fmt_float).collect();
    out.push_str(&row.join(","));
    out.push('\n');
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable report");
    s.push('\n');
    s
}

/// File names and contents produced by one command.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Outputs {
    pub files: Vec<(String, String)>,
    /// Printed when no output directory is given, or always for JSON reports.
    pub stdout: String,
    pub always_print: bool,
    pub verified: Option<bool>,
    pub dir: Option<PathBuf>,
}

impl Outputs {
    fn report(name: &str, text: String) -> Self {
        Self { files: vec![(name.into(), text.clone())], stdout: text, always_print: true, ..Self::default() }
    }
}

pub const COEFF_COLUMNS: [&str; 17] = [
    "t",
    "dtilde",
    "omega_eff_sq",
    "gamma_eff",
    "Fy",
    "Fq",
    "f1",
    "f2",
    "f1_yy",
    "f1_yq",
    "f1_qy",
    "f1_qq",
    "f2_yy",
    "f2_yq",
    "f2_qy",
    "f2_qq",
    "valid",
];

pub const EVOLVE_COLUMNS: [&str; 11] = ["t", "mean_x", "mean_p", "dx2", "dp2", "dxp", "A2", "S", "S_approx", "varsigma", "E"];

pub fn coeffs_csv(rows: &[MECoefficients]) -> String {
    let mut out = COEFF_COLUMNS.join(",");
    out.push('\n');
    for c in rows {
        let [[a, b], [e, f]] = c.f1_tensor;
        let [[g, h], [i, j]] = c.f2_tensor;
        csv_row(&mut out, [c.t, c.dtilde, c.omega_eff_sq, c.gamma_eff, c.fy, c.fq, c.f1, c.f2, a, b, e, f, g, h, i, j]);
        out.pop();
        let _ = writeln!(out, ",{}", u8::from(c.valid));
    }
    out
}

fn evolve_values(tr: &Trajectory, i: usize) -> [f64; 10] {
    let m = tr.moments[i];
    let d = tr.diags[i];
    [m.mean_x, m.mean_p, m.dx2, m.dp2, m.dxp, d.a * d.a, d.s, d.s_approx, d.varsigma, d.energy]
}

pub fn evolve_csv(tr: &Trajectory) -> String {
    let mut out = EVOLVE_COLUMNS.join(",");
    out.push('\n');
    for (i, t) in tr.times.iter().enumerate() {
        csv_row(&mut out, std::iter::once(*t).chain(evolve_values(tr, i)));
    }
    out
}

/// Exact columns, then the master-equation moments and entropy, then the
/// per-sample relative deviation.
pub fn compare_csv(exact: &Trajectory, me: &Trajectory, report: &evolution::ComparisonReport) -> String {
    let mut cols: Vec<String> = EVOLVE_COLUMNS.iter().map(|s| s.to_string()).collect();
    cols.extend(Moments::NAMES.iter().map(|n| format!("{n}_me")));
    cols.push("S_me".into());
    cols.push("rel_err_max".into());
    let mut out = cols.join(",");
    out.push('\n');
    for (i, t) in exact.times.iter().enumerate() {
        let vals =
            std::iter::once(*t).chain(evolve_values(exact, i)).chain(me.moments[i].as_array()).chain([me.diags[i].s, report.sample_rel[i]]);
        csv_row(&mut out, vals);
    }
    out
}

// ---------------------------------------------------------------- commands

#[derive(Debug, Clone, Serialize)]
pub struct ModesReport {
    pub modes: NormalModes,
    pub bare: Option<SupersystemParams>,
    /// Modes rederived from `bare`.
    pub round_trip: Option<NormalModes>,
    pub note: Option<String>,
}

pub fn cmd_modes(cfg: &RunConfig) -> Result<Outputs, CliError> {
    let r = cfg.resolve()?;
    let (bare, note) = match r.bare {
        Some(b) => (Some(b), None),
        None => (None, modes::params_for(&r.modes).err().map(|e| e.to_string())),
    };
    let round_trip = bare.as_ref().map(modes::derive_modes).transpose()?;
    let report = ModesReport { modes: r.modes, bare, round_trip, note };
    Ok(Outputs::report("modes.json", to_json(&report)))
}

pub fn cmd_coeffs(cfg: &RunConfig) -> Result<Outputs, CliError> {
    let r = cfg.resolve()?;
    let env = r.init.env_variance(&r.modes);
    let rows: Vec<MECoefficients> = r.grid.par_iter().map(|&t| coefficients::coeffs(&r.modes, &env, t)).collect();
    let csv = coeffs_csv(&rows);
    Ok(Outputs { files: vec![("coeffs.csv".into(), csv.clone())], stdout: csv, ..Outputs::default() })
}

/// Run summary written next to an evolution CSV.
#[derive(Debug, Clone, Serialize)]
pub struct EvolveMeta {
    pub config: RunConfig,
    pub modes: NormalModes,
    pub samples: usize,
    pub bridge_intervals: Vec<[f64; 2]>,
    pub first_bridge: Option<f64>,
    pub bridged_samples: usize,
    pub nonphysical_samples: usize,
    pub steps: usize,
    pub rejected_steps: usize,
    pub comparison: Option<ComparisonSummary>,
    pub analysis: AnalysisReport,
}

#[derive(Debug, Clone, Serialize)]
pub struct ComparisonSummary {
    pub max_abs: [f64; 5],
    pub max_rel: [f64; 5],
    pub rel_err_max: f64,
    pub excluded_samples: usize,
}

struct Evolved {
    csv: String,
    meta: EvolveMeta,
    fit: Option<LineFit>,
}

fn evolve(cfg: &RunConfig) -> Result<Evolved, CliError> {
    let r = cfg.resolve()?;
    let exact = || evolution::run_exact(&r.modes, &r.init, &r.grid);
    let me = || evolution::run_me(&r.modes, &r.init, &r.grid, &r.opts);
    let (main, csv, comparison, me_meta) = match cfg.method {
        Method::Exact => {
            let tr = exact()?;
            let csv = evolve_csv(&tr);
            (tr, csv, None, None)
        }
        Method::Me => {
            let tr = me()?;
            let csv = evolve_csv(&tr);
            let meta = tr.meta.clone();
            (tr, csv, None, Some(meta))
        }
        Method::Compare => {
            let (ex, m) = rayon::join(exact, me);
            let (ex, m) = (ex?, m?);
            let rep = evolution::compare_trajectories(&m, &ex)?;
            let csv = compare_csv(&ex, &m, &rep);
            let summary = ComparisonSummary {
                max_abs: rep.max_abs,
                max_rel: rep.max_rel,
                rel_err_max: rep.rel_err_max,
                excluded_samples: rep.excluded.iter().filter(|x| **x).count(),
            };
            (ex, csv, Some(summary), Some(m.meta))
        }
    };
    let fit = analysis::fit_entropy_line(&main, cfg.fit_window, r.modes.omega).ok();
    let dx2 = main.moments[0].dx2;
    let t_max = *r.grid.last().expect("nonempty grid");
    let report = analysis::analyze(&r.modes, Some(&main), t_max, cfg.fit_window, cfg.s_d, dx2);
    let count = |v: &[bool]| v.iter().filter(|x| **x).count();
    let mm = me_meta.unwrap_or_default();
    let meta = EvolveMeta {
        config: cfg.clone(),
        modes: r.modes,
        samples: r.grid.len(),
        bridge_intervals: mm.bridge_intervals.clone(),
        first_bridge: mm.first_bridge,
        bridged_samples: count(&mm.bridged),
        nonphysical_samples: count(&mm.nonphysical),
        steps: mm.steps,
        rejected_steps: mm.rejected_steps,
        comparison,
        analysis: report,
    };
    Ok(Evolved { csv, meta, fit })
}

pub fn cmd_evolve(cfg: &RunConfig) -> Result<Outputs, CliError> {
    let ev = evolve(cfg)?;
    Ok(Outputs {
        files: vec![("evolve.csv".into(), ev.csv.clone()), ("meta.json".into(), to_json(&ev.meta))],
        stdout: ev.csv,
        ..Outputs::default()
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct DivergenceReport {
    pub t_max: f64,
    pub divergence_times: Vec<f64>,
    pub t_c_paper: Option<f64>,
    pub t_c_derived: Option<f64>,
}

pub fn cmd_divergences(cfg: &RunConfig) -> Result<Outputs, CliError> {
    let r = cfg.resolve()?;
    let m = &r.modes;
    let l = m.lambda();
    let report = DivergenceReport {
        t_max: cfg.grid.t_max,
        divergence_times: analysis::find_divergences(m, cfg.grid.t_max),
        t_c_paper: analysis::critical_time_paper(m.omega, l, m.theta_c).ok(),
        t_c_derived: analysis::critical_time_derived(m.omega, l, m.theta_c).ok(),
    };
    Ok(Outputs::report("divergences.json", to_json(&report)))
}

#[derive(Debug, Clone, Serialize)]
pub struct ScanEntry {
    pub value: f64,
    pub file: String,
    pub slope: Option<f64>,
    pub s0: Option<f64>,
    pub rel_residual: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ScanIndex {
    pub vary: String,
    pub fit_window: [f64; 2],
    pub runs: Vec<ScanEntry>,
}

pub fn parse_values(list: &str) -> Result<Vec<f64>, CliError> {
    let vals: Option<Vec<f64>> = list.split(',').map(|s| parse_number(s.trim())).collect();
    match vals {
        Some(v) if !v.is_empty() => Ok(v),
        _ => Err(CliError::validation(format!("cannot parse --values {list:?}"))),
    }
}

pub fn cmd_scan(cfg: &RunConfig, vary: &str, values: &[f64]) -> Result<Outputs, CliError> {
    let configs: Vec<RunConfig> = values
        .iter()
        .map(|&v| {
            let mut c = cfg.clone();
            c.set(vary, v).map(|_| c)
        })
        .collect::<Result<_, _>>()?;
    let runs: Vec<Evolved> = configs.par_iter().map(evolve).collect::<Result<_, _>>()?;
    let mut files = Vec::new();
    let mut entries = Vec::new();
    for (i, (ev, &value)) in runs.into_iter().zip(values).enumerate() {
        let name = format!("scan_{i:03}.csv");
        entries.push(ScanEntry {
            value,
            file: name.clone(),
            slope: ev.fit.map(|f| f.slope),
            s0: ev.fit.map(|f| f.intercept),
            rel_residual: ev.fit.map(|f| f.rel_residual),
        });
        files.push((name, ev.csv));
    }
    let index = to_json(&ScanIndex { vary: vary.into(), fit_window: cfg.fit_window, runs: entries });
    // Index last, so a complete index implies complete runs.
    files.push(("scan_index.json".into(), index.clone()));
    Ok(Outputs { files, stdout: index, always_print: true, ..Outputs::default() })
}

#[derive(Debug, Clone, Serialize)]
pub struct DualCheck {
    pub applicable: bool,
    pub samples: usize,
    pub max_deviation: f64,
    pub tolerance: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct OracleCheck {
    pub window: [f64; 2],
    pub samples: usize,
    pub max_rel: [f64; 5],
    pub rel_err_max: f64,
    pub tolerance: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyReport {
    pub dual_formula: DualCheck,
    pub oracle: OracleCheck,
    pub pass: bool,
}

/// Closed vs general coefficients on the configured grid, restricted to
/// `|D~| > 1e-3` and `lambda t <= 8` (beyond that the general route's
/// cancellations dominate).
pub fn dual_check(modes: &NormalModes, init: &InitialState, grid: &[f64]) -> DualCheck {
    let env = init.env_variance(modes);
    let applicable = modes.lambda_sq > 0.0 && modes.omega > 0.0;
    let l = modes.lambda();
    let devs: Vec<f64> = if applicable {
        grid.par_iter()
            .filter(|&&t| l * t <= 8.0 && propagator::dtilde(modes, t).abs() > DUAL_MIN_DTILDE)
            .map(|&t| {
                let a = coefficients::coeffs_general(modes, &env, t);
                let b = coefficients::coeffs_closed(modes, &env, t).expect("regime checked");
                coefficients::route_deviation(&a, &b, modes)
            })
            .collect()
    } else {
        Vec::new()
    };
    let max_deviation = devs.iter().copied().fold(0.0, f64::max);
    DualCheck { applicable, samples: devs.len(), max_deviation, tolerance: DUAL_TOLERANCE, pass: max_deviation < DUAL_TOLERANCE }
}

/// Master equation against exact propagation on `[0, 0.9 t1]`, or on the
/// whole grid span when no root occurs there.
pub fn oracle_check(
    modes: &NormalModes,
    init: &InitialState,
    t_max: f64,
    samples: usize,
    opts: &IntegratorOptions,
) -> Result<OracleCheck, Error> {
    let end = analysis::find_divergences(modes, t_max).first().map_or(t_max, |t1| 0.9 * t1);
    let grid = evolution::uniform_grid(end, samples);
    let ex = evolution::run_exact(modes, init, &grid)?;
    let me = evolution::run_me(modes, init, &grid, opts)?;
    let rep = evolution::compare_trajectories(&me, &ex)?;
    Ok(OracleCheck {
        window: [0.0, end],
        samples: grid.len(),
        max_rel: rep.max_rel,
        rel_err_max: rep.rel_err_max,
        tolerance: ORACLE_TOLERANCE,
        pass: rep.rel_err_max < ORACLE_TOLERANCE,
    })
}

pub fn cmd_verify(cfg: &RunConfig) -> Result<Outputs, CliError> {
    let r = cfg.resolve()?;
    let dual = dual_check(&r.modes, &r.init, &r.grid);
    let oracle = oracle_check(&r.modes, &r.init, cfg.grid.t_max, r.grid.len().min(401), &r.opts)?;
    let pass = dual.pass && oracle.pass;
    let mut out = Outputs::report("verify.json", to_json(&VerifyReport { dual_formula: dual, oracle, pass }));
    out.verified = Some(pass);
    Ok(out)
}

// ---------------------------------------------------------------- driver

pub fn dispatch(args: &Args) -> Result<Outputs, CliError> {
    let text = fs::read_to_string(&args.config).map_err(|e| CliError::validation(format!("cannot read {}: {e}", args.config.display())))?;
    let cfg = RunConfig::from_json(&text)?;
    if args.command != Command::Scan && (args.vary.is_some() || args.values.is_some()) {
        return Err(CliError::validation("--vary/--values only apply to scan"));
    }
    let mut out = match args.command {
        Command::Modes => cmd_modes(&cfg),
        Command::Coeffs => cmd_coeffs(&cfg),
        Command::Evolve => cmd_evolve(&cfg),
        Command::Divergences => cmd_divergences(&cfg),
        Command::Verify => cmd_verify(&cfg),
        Command::Scan => {
            let (Some(vary), Some(values)) = (&args.vary, &args.values) else {
                return Err(CliError::validation("scan needs --vary and --values"));
            };
            if args.out.is_none() && cfg.output.path.is_none() {
                return Err(CliError::validation("scan needs --out"));
            }
            cmd_scan(&cfg, vary, &parse_values(values)?)
        }
    }?;
    out.dir = args.out.clone().or(cfg.output.path);
    Ok(out)
}

fn write_outputs(dir: &Path, outputs: &Outputs) -> Result<(), CliError> {
    let io = |e: std::io::Error| CliError::validation(format!("cannot write to {}: {e}", dir.display()));
    fs::create_dir_all(dir).map_err(io)?;
    for (name, text) in &outputs.files {
        fs::write(dir.join(name), text).map_err(io)?;
    }
    Ok(())
}

fn thread_cap() -> Result<Option<usize>, CliError> {
    match std::env::var("INVHARM_THREADS") {
        Err(_) => Ok(None),
        Ok(s) => match s.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(CliError::validation(format!("INVHARM_THREADS must be a positive integer, got {s:?}"))),
        },
    }
}

fn execute(args: &Args) -> Result<Outputs, CliError> {
    let outputs = match thread_cap()? {
        None => dispatch(args)?,
        Some(n) => {
            let pool =
                rayon::ThreadPoolBuilder::new().num_threads(n).build().map_err(|e| CliError::validation(format!("thread pool: {e}")))?;
            pool.install(|| dispatch(args))?
        }
    };
    Ok(outputs)
}

/// Parse arguments, run, print, and return the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let args = match Args::try_parse_from(argv) {
        Ok(a) => a,
        Err(e) => {
            if !e.use_stderr() {
                let _ = e.print();
                return 0;
            }
            emit_error(&CliError::validation(e.to_string()));
            return 1;
        }
    };
    let result = execute(&args).and_then(|out| {
        if let Some(d) = &out.dir {
            write_outputs(d, &out)?;
        }
        if out.dir.is_none() || out.always_print {
            let _ = std::io::stdout().lock().write_all(out.stdout.as_bytes());
        }
        Ok(out)
    });
    match result {
        Ok(out) => match out.verified {
            Some(false) => {
                eprintln!("{}", serde_json::json!({"error": "verification", "message": "tolerances not met"}));
                2
            }
            _ => 0,
        },
        Err(e) => {
            emit_error(&e);
            e.error.exit_code()
        }
    }
}

fn emit_error(e: &CliError) {
    eprintln!("{}", serde_json::to_string(e).expect("error json"));
}
