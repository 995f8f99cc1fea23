//! Python bindings. Reports come back as plain dicts and lists.

use engine::analysis;
use engine::evolution::{self, FrequencyVariant};
use engine::{Error, MECoefficients};
use pyo3::exceptions::{PyArithmeticError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};
use serde_json::Value;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::SingularAtDivergence { .. } | Error::StepFailure { .. } => PyArithmeticError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn frequency_variant(name: &str) -> Result<FrequencyVariant, String> {
    match name {
        "effective" => Ok(FrequencyVariant::Effective),
        "mode_omega" => Ok(FrequencyVariant::ModeOmega),
        _ => Err(format!("unknown frequency variant `{name}` (expected effective or mode_omega)")),
    }
}

fn json_to_py<'py>(py: Python<'py>, v: &Value) -> PyResult<Bound<'py, PyAny>> {
    Ok(match v {
        Value::Null => py.None().into_bound(py),
        Value::Bool(b) => b.into_pyobject(py)?.to_owned().into_any(),
        Value::Number(n) => match n.as_u64() {
            Some(u) => u.into_pyobject(py)?.into_any(),
            None => n.as_f64().unwrap_or(f64::NAN).into_pyobject(py)?.into_any(),
        },
        Value::String(s) => s.into_pyobject(py)?.into_any(),
        Value::Array(a) => {
            let items = a.iter().map(|x| json_to_py(py, x)).collect::<PyResult<Vec<_>>>()?;
            PyList::new(py, items)?.into_any()
        }
        Value::Object(o) => {
            let d = PyDict::new(py);
            for (k, x) in o {
                d.set_item(k, json_to_py(py, x)?)?;
            }
            d.into_any()
        }
    })
}

fn to_py<'py, T: serde::Serialize>(py: Python<'py>, x: &T) -> PyResult<Bound<'py, PyAny>> {
    let v = serde_json::to_value(x).map_err(|e| PyValueError::new_err(e.to_string()))?;
    json_to_py(py, &v)
}

#[pyclass(name = "NormalModes", module = "invharm", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyModes(engine::NormalModes);

#[pymethods]
impl PyModes {
    #[new]
    #[pyo3(signature = (omega, lambda_sq, theta_c, m_s = 1.0, m_e = 1.0, hbar = 1.0))]
    fn new(omega: f64, lambda_sq: f64, theta_c: f64, m_s: f64, m_e: f64, hbar: f64) -> PyResult<Self> {
        engine::NormalModes::new(omega, lambda_sq, theta_c, m_s, m_e, hbar).map(Self).map_err(py_err)
    }

    #[getter]
    fn omega(&self) -> f64 {
        self.0.omega
    }
    #[getter]
    fn lambda_sq(&self) -> f64 {
        self.0.lambda_sq
    }
    #[getter]
    fn theta_c(&self) -> f64 {
        self.0.theta_c
    }
    #[getter]
    fn eps(&self) -> f64 {
        self.0.eps
    }
    #[getter]
    fn m_s(&self) -> f64 {
        self.0.m_s
    }
    #[getter]
    fn m_e(&self) -> f64 {
        self.0.m_e
    }
    #[getter]
    fn hbar(&self) -> f64 {
        self.0.hbar
    }
    /// Instability rate; 0 unless the environment is inverted.
    #[getter]
    fn lambda_(&self) -> f64 {
        self.0.lambda()
    }

    fn with_theta(&self, theta_c: f64) -> Self {
        Self(self.0.with_theta(theta_c))
    }

    /// Bare parameters that reproduce these modes.
    fn params<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &engine::params_for(&self.0).map_err(py_err)?)
    }

    fn __repr__(&self) -> String {
        let m = &self.0;
        format!(
            "NormalModes(omega={}, lambda_sq={}, theta_c={}, m_s={}, m_e={}, hbar={})",
            m.omega, m.lambda_sq, m.theta_c, m.m_s, m.m_e, m.hbar
        )
    }
}

#[pyclass(name = "InitialState", module = "invharm", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyInit(evolution::InitialState);

#[pymethods]
impl PyInit {
    #[new]
    #[pyo3(signature = (r_s = 4.0, angle_s = 0.0, r_e = 2.0, angle_e = 0.0, sys_mean = (0.0, 0.0), env_mean = (0.0, 0.0)))]
    fn new(r_s: f64, angle_s: f64, r_e: f64, angle_e: f64, sys_mean: (f64, f64), env_mean: (f64, f64)) -> PyResult<Self> {
        let sys = engine::SqueezeSpec::new(r_s, angle_s).map_err(py_err)?;
        let env = engine::SqueezeSpec::new(r_e, angle_e).map_err(py_err)?;
        let mut s = evolution::InitialState::new(sys, env);
        s.sys_mean = [sys_mean.0, sys_mean.1];
        s.env_mean = [env_mean.0, env_mean.1];
        s.validate().map_err(py_err)?;
        Ok(Self(s))
    }

    fn __repr__(&self) -> String {
        let s = &self.0;
        format!(
            "InitialState(r_s={}, angle_s={}, r_e={}, angle_e={}, sys_mean={:?}, env_mean={:?})",
            s.sys.r, s.sys.angle, s.env.r, s.env.angle, s.sys_mean, s.env_mean
        )
    }
}

#[pyclass(name = "Trajectory", module = "invharm", frozen, skip_from_py_object)]
struct PyTrajectory(engine::Trajectory);

#[pymethods]
impl PyTrajectory {
    #[getter]
    fn times(&self) -> Vec<f64> {
        self.0.times.clone()
    }
    #[getter]
    fn entropy(&self) -> Vec<f64> {
        self.0.entropy()
    }
    #[getter]
    fn method(&self) -> String {
        self.0.meta.method.clone()
    }
    #[getter]
    fn bridged(&self) -> Vec<bool> {
        self.0.meta.bridged.clone()
    }
    #[getter]
    fn nonphysical(&self) -> Vec<bool> {
        self.0.meta.nonphysical.clone()
    }
    #[getter]
    fn bridge_intervals(&self) -> Vec<(f64, f64)> {
        self.0.meta.bridge_intervals.iter().map(|[a, b]| (*a, *b)).collect()
    }

    /// Column lists keyed by moment name.
    fn moments<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let d = PyDict::new(py);
        for (k, name) in evolution::Moments::NAMES.iter().enumerate() {
            let col: Vec<f64> = self.0.moments.iter().map(|m| m.as_array()[k]).collect();
            d.set_item(*name, col)?;
        }
        Ok(d)
    }

    /// Column lists of area, a, s, s_approx, varsigma, purity and energy.
    fn diagnostics<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let d = PyDict::new(py);
        let ds = &self.0.diags;
        d.set_item("area", ds.iter().map(|x| x.area).collect::<Vec<_>>())?;
        d.set_item("a", ds.iter().map(|x| x.a).collect::<Vec<_>>())?;
        d.set_item("s", ds.iter().map(|x| x.s).collect::<Vec<_>>())?;
        d.set_item("s_approx", ds.iter().map(|x| x.s_approx).collect::<Vec<_>>())?;
        d.set_item("varsigma", ds.iter().map(|x| x.varsigma).collect::<Vec<_>>())?;
        d.set_item("purity", ds.iter().map(|x| x.purity).collect::<Vec<_>>())?;
        d.set_item("energy", ds.iter().map(|x| x.energy).collect::<Vec<_>>())?;
        Ok(d)
    }

    fn __len__(&self) -> usize {
        self.0.times.len()
    }
}

fn coeff_dict<'py>(py: Python<'py>, c: &MECoefficients) -> PyResult<Bound<'py, PyDict>> {
    // Built by hand so NaN entries survive.
    let d = PyDict::new(py);
    d.set_item("t", c.t)?;
    d.set_item("omega_eff_sq", c.omega_eff_sq)?;
    d.set_item("gamma_eff", c.gamma_eff)?;
    d.set_item("fy", c.fy)?;
    d.set_item("fq", c.fq)?;
    d.set_item("f", c.f)?;
    d.set_item("f1", c.f1)?;
    d.set_item("f2", c.f2)?;
    d.set_item("f1_tensor", c.f1_tensor.map(|r| r.to_vec()).to_vec())?;
    d.set_item("f2_tensor", c.f2_tensor.map(|r| r.to_vec()).to_vec())?;
    d.set_item("beta", c.beta)?;
    d.set_item("dtilde", c.dtilde)?;
    d.set_item("valid", c.valid)?;
    Ok(d)
}

#[pyfunction]
#[pyo3(signature = (omega_bare, lambda_sq_bare, g, m_s = 1.0, m_e = 1.0, hbar = 1.0))]
fn derive_modes(omega_bare: f64, lambda_sq_bare: f64, g: f64, m_s: f64, m_e: f64, hbar: f64) -> PyResult<PyModes> {
    let p = engine::SupersystemParams { m_s, m_e, omega_bare, lambda_sq_bare, g, hbar };
    engine::derive_modes(&p).map(PyModes).map_err(py_err)
}

/// Coefficients at time `t`; `route` is auto, closed or general.
#[pyfunction]
#[pyo3(signature = (modes, init, t, route = "auto"))]
fn coeffs<'py>(py: Python<'py>, modes: PyRef<'_, PyModes>, init: PyRef<'_, PyInit>, t: f64, route: &str) -> PyResult<Bound<'py, PyDict>> {
    let env = init.0.env_variance(&modes.0);
    let c = match route {
        "auto" => engine::coeffs(&modes.0, &env, t),
        "closed" => engine::coeffs_closed(&modes.0, &env, t).map_err(py_err)?,
        "general" => engine::coeffs_general(&modes.0, &env, t),
        _ => return Err(PyValueError::new_err(format!("unknown route `{route}`"))),
    };
    coeff_dict(py, &c)
}

#[pyfunction]
fn uniform_grid(t_max: f64, samples: usize) -> Vec<f64> {
    evolution::uniform_grid(t_max, samples)
}

#[pyfunction]
fn run_exact(modes: PyRef<'_, PyModes>, init: PyRef<'_, PyInit>, times: Vec<f64>) -> PyResult<PyTrajectory> {
    engine::run_exact(&modes.0, &init.0, &times).map(PyTrajectory).map_err(py_err)
}

#[pyfunction]
#[pyo3(signature = (modes, init, times, rel_tol = 1e-10, abs_tol = 1e-12, max_step = 0.1, divergence_guard = 1e-3, frequency = "effective"))]
#[allow(clippy::too_many_arguments)]
fn run_me(
    modes: PyRef<'_, PyModes>,
    init: PyRef<'_, PyInit>,
    times: Vec<f64>,
    rel_tol: f64,
    abs_tol: f64,
    max_step: f64,
    divergence_guard: f64,
    frequency: &str,
) -> PyResult<PyTrajectory> {
    let frequency = frequency_variant(frequency).map_err(PyValueError::new_err)?;
    let opts = engine::IntegratorOptions { rel_tol, abs_tol, max_step, divergence_guard, frequency };
    engine::run_me(&modes.0, &init.0, &times, &opts).map(PyTrajectory).map_err(py_err)
}

/// Deviation of `a` from the reference `b`.
#[pyfunction]
fn compare<'py>(py: Python<'py>, a: PyRef<'_, PyTrajectory>, b: PyRef<'_, PyTrajectory>) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &engine::compare_trajectories(&a.0, &b.0).map_err(py_err)?)
}

#[pyfunction]
fn find_divergences(modes: PyRef<'_, PyModes>, t_max: f64) -> Vec<f64> {
    analysis::find_divergences(&modes.0, t_max)
}

/// `(t_c_paper, t_c_derived)`; None where undefined.
#[pyfunction]
fn critical_times(modes: PyRef<'_, PyModes>) -> (Option<f64>, Option<f64>) {
    let m = &modes.0;
    (
        analysis::critical_time_paper(m.omega, m.lambda(), m.theta_c).ok(),
        analysis::critical_time_derived(m.omega, m.lambda(), m.theta_c).ok(),
    )
}

/// Least-squares fit of S against t (model "line") or ln t (model "log")
/// over whole modulation periods inside `window`.
#[pyfunction]
#[pyo3(signature = (traj, window, omega, model = "line"))]
fn fit_entropy<'py>(
    py: Python<'py>,
    traj: PyRef<'_, PyTrajectory>,
    window: (f64, f64),
    omega: f64,
    model: &str,
) -> PyResult<Bound<'py, PyAny>> {
    let w = [window.0, window.1];
    let fit = match model {
        "line" => analysis::fit_entropy_line(&traj.0, w, omega),
        "log" => analysis::fit_entropy_log(&traj.0, w, omega),
        _ => return Err(PyValueError::new_err(format!("unknown model `{model}`"))),
    };
    to_py(py, &fit.map_err(py_err)?)
}

#[pyfunction]
#[pyo3(signature = (modes, traj, window = (5.0, 15.0), s_d = std::f64::consts::LN_2))]
fn analyze<'py>(
    py: Python<'py>,
    modes: PyRef<'_, PyModes>,
    traj: PyRef<'_, PyTrajectory>,
    window: (f64, f64),
    s_d: f64,
) -> PyResult<Bound<'py, PyAny>> {
    let t = &traj.0;
    let t_max = *t.times.last().ok_or_else(|| PyValueError::new_err("empty trajectory"))?;
    let dx2 = t.moments[0].dx2;
    to_py(py, &analysis::analyze(&modes.0, Some(t), t_max, [window.0, window.1], s_d, dx2))
}

#[pymodule]
fn invharm(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyModes>()?;
    m.add_class::<PyInit>()?;
    m.add_class::<PyTrajectory>()?;
    m.add_function(wrap_pyfunction!(derive_modes, m)?)?;
    m.add_function(wrap_pyfunction!(coeffs, m)?)?;
    m.add_function(wrap_pyfunction!(uniform_grid, m)?)?;
    m.add_function(wrap_pyfunction!(run_exact, m)?)?;
    m.add_function(wrap_pyfunction!(run_me, m)?)?;
    m.add_function(wrap_pyfunction!(compare, m)?)?;
    m.add_function(wrap_pyfunction!(find_divergences, m)?)?;
    m.add_function(wrap_pyfunction!(critical_times, m)?)?;
    m.add_function(wrap_pyfunction!(fit_entropy, m)?)?;
    m.add_function(wrap_pyfunction!(analyze, m)?)?;
    Ok(())
}
