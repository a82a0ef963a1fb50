//! Python bindings: load models from JSON, solve the moment ODEs, run
//! Monte Carlo, and compute periodic/resetting statistics from Python.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use mjp_reward::cltapprox;
use mjp_reward::model::{validate_model, InitialDistribution, ModelSpec};
use mjp_reward::modelfile;
use mjp_reward::moments;
use mjp_reward::ode::{Method, SolverConfig};
use mjp_reward::periodic;
use mjp_reward::resetting::{self, ResetSpec};
use mjp_reward::sim;
use mjp_reward::transition;
use mjp_reward::Error;

fn to_py_err(e: Error) -> PyErr {
    match e {
        Error::Solver(_) | Error::Quadrature(_) | Error::Linear(_) | Error::Bound(_) => {
            PyRuntimeError::new_err(e.to_string())
        }
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn config(method: &str, h: f64, rtol: f64, atol: f64) -> PyResult<SolverConfig> {
    let method = match method {
        "euler" => Method::Euler,
        "rk2" => Method::Rk2,
        "rk4" => Method::Rk4,
        "dopri54" => Method::Dopri54,
        other => {
            return Err(PyValueError::new_err(format!(
                "unknown method `{other}` (expected euler, rk2, rk4, dopri54)"
            )))
        }
    };
    Ok(SolverConfig {
        method,
        h,
        rtol,
        atol,
        h_max: 1.0,
        dense_output: false,
    })
}

/// A Markov jump process model with its reward structure.
#[pyclass(frozen)]
struct Model {
    inner: ModelSpec,
}

#[pymethods]
impl Model {
    /// Load from a JSON document string.
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Model {
            inner: modelfile::from_json(text).map_err(to_py_err)?,
        })
    }

    /// Load from a JSON file path.
    #[staticmethod]
    fn from_file(path: &str) -> PyResult<Self> {
        Ok(Model {
            inner: modelfile::load(path).map_err(to_py_err)?,
        })
    }

    /// One of: prendiville, mm1k, multiserver, periodic_two_state.
    #[staticmethod]
    fn builtin(name: &str) -> PyResult<Self> {
        mjp_reward::models::builtin(name)
            .map(|inner| Model { inner })
            .ok_or_else(|| PyValueError::new_err(format!("unknown builtin `{name}`")))
    }

    /// Number of states.
    #[getter]
    fn states(&self) -> usize {
        self.inner.d
    }

    /// Grid-based assumption checks; returns (valid, [(name, passed,
    /// detail), ...]).
    #[pyo3(signature = (probe_points = 64))]
    fn validate(&self, probe_points: usize) -> (bool, Vec<(String, bool, String)>) {
        let report = validate_model(&self.inner, probe_points);
        let rows = report
            .checks
            .iter()
            .map(|c| (c.name.clone(), c.passed, c.detail.clone()))
            .collect();
        (report.valid(), rows)
    }

    /// Declared breakpoints and scheduled times inside (0, horizon).
    fn breakpoints(&self, horizon: f64) -> Vec<f64> {
        self.inner.breakpoints_within(horizon)
    }

    fn __repr__(&self) -> String {
        format!("Model(states={})", self.inner.d)
    }
}

/// Mean/variance solution of the backward moment system.
#[pyclass(frozen)]
struct MomentResult {
    #[pyo3(get)]
    mean: f64,
    #[pyo3(get)]
    variance: f64,
    /// Conditional means `E[R | X(0) = x]`.
    #[pyo3(get)]
    conditional_means: Vec<f64>,
    /// Conditional second moments `E[R^2 | X(0) = x]`.
    #[pyo3(get)]
    conditional_second_moments: Vec<f64>,
}

#[pyfunction]
#[pyo3(signature = (model, t, method = "dopri54", h = 1e-3, rtol = 1e-9, atol = 1e-12))]
fn solve_moments(
    model: &Model,
    t: f64,
    method: &str,
    h: f64,
    rtol: f64,
    atol: f64,
) -> PyResult<MomentResult> {
    let cfg = config(method, h, rtol, atol)?;
    let sol = moments::solve_moments(&model.inner, t, &cfg).map_err(to_py_err)?;
    Ok(MomentResult {
        mean: sol.expected_reward(),
        variance: sol.variance(),
        conditional_means: sol.m_start().to_vec(),
        conditional_second_moments: sol.v_start().to_vec(),
    })
}

/// Monte Carlo summary statistics.
#[pyclass(frozen)]
struct SimResult {
    #[pyo3(get)]
    n: usize,
    #[pyo3(get)]
    mean: f64,
    #[pyo3(get)]
    variance: f64,
    #[pyo3(get)]
    se_mean: f64,
    #[pyo3(get)]
    se_variance: f64,
    /// `(z, coverage, ci_halfwidth)` per query point.
    #[pyo3(get)]
    ecdf: Vec<(f64, f64, f64)>,
    /// Per-path totals, in path-index order.
    #[pyo3(get)]
    totals: Vec<f64>,
}

#[pyfunction]
#[pyo3(signature = (model, t, n_paths, seed = 0, workers = 0, query_points = vec![]))]
fn monte_carlo(
    py: Python<'_>,
    model: &Model,
    t: f64,
    n_paths: usize,
    seed: u64,
    workers: usize,
    query_points: Vec<f64>,
) -> PyResult<SimResult> {
    let stats = py
        .detach(|| sim::monte_carlo(&model.inner, t, n_paths, seed, workers, &query_points))
        .map_err(to_py_err)?;
    Ok(SimResult {
        n: stats.n,
        mean: stats.mean,
        variance: stats.variance,
        se_mean: stats.se_mean,
        se_variance: stats.se_variance,
        ecdf: stats
            .ecdf
            .iter()
            .map(|p| (p.z, p.coverage, p.ci_halfwidth))
            .collect(),
        totals: stats.samples.iter().map(|s| s.total).collect(),
    })
}

/// Periodic CLT constants.
#[pyclass(frozen)]
struct PeriodicResult {
    #[pyo3(get)]
    alpha: f64,
    #[pyo3(get)]
    sigma2: f64,
    #[pyo3(get)]
    pi0: Vec<f64>,
    #[pyo3(get)]
    k: Vec<f64>,
    #[pyo3(get)]
    seam_residual: f64,
    #[pyo3(get)]
    fredholm_residual: f64,
}

#[pymethods]
impl PeriodicResult {
    /// `P(R(t) <= z)` under the periodic normal approximation.
    fn cdf(&self, t: f64, z: f64) -> PyResult<f64> {
        if !(t > 0.0) || !(self.sigma2 > 0.0) {
            return Err(PyValueError::new_err("need t > 0 and sigma2 > 0"));
        }
        cltapprox::normal_approx_cdf(self.alpha * t, self.sigma2 * t, z).map_err(to_py_err)
    }
}

#[pyfunction]
#[pyo3(signature = (model, grid_n = 1024, rtol = 1e-9, atol = 1e-12))]
fn solve_periodic(
    py: Python<'_>,
    model: &Model,
    grid_n: usize,
    rtol: f64,
    atol: f64,
) -> PyResult<PeriodicResult> {
    let cfg = config("dopri54", 1e-3, rtol, atol)?;
    let c = py
        .detach(|| periodic::solve_periodic(&model.inner, &cfg, grid_n))
        .map_err(to_py_err)?;
    Ok(PeriodicResult {
        alpha: c.alpha,
        sigma2: c.sigma2,
        pi0: c.pi0,
        k: c.k,
        seam_residual: c.seam_residual,
        fredholm_residual: c.fredholm_residual,
    })
}

#[pyfunction]
#[pyo3(signature = (model, periods, reset_state = 0, rtol = 1e-9, atol = 1e-12))]
fn solve_resetting(
    py: Python<'_>,
    model: &Model,
    periods: usize,
    reset_state: usize,
    rtol: f64,
    atol: f64,
) -> PyResult<(Vec<(f64, f64)>, Vec<(f64, f64)>)> {
    let cfg = config("dopri54", 1e-3, rtol, atol)?;
    let reset = ResetSpec::same_each_period(InitialDistribution::Point(reset_state), periods);
    let sol = py
        .detach(|| resetting::solve_resetting(&model.inner, &reset, &cfg))
        .map_err(to_py_err)?;
    Ok((sol.per_period, sol.cumulative))
}

#[pyfunction]
#[pyo3(signature = (model, times, levels, n_paths, seed = 0, workers = 0, rtol = 1e-9, atol = 1e-12))]
#[allow(clippy::too_many_arguments)]
fn coverage_study(
    py: Python<'_>,
    model: &Model,
    times: Vec<f64>,
    levels: Vec<f64>,
    n_paths: usize,
    seed: u64,
    workers: usize,
    rtol: f64,
    atol: f64,
) -> PyResult<Vec<(f64, f64, f64, f64, f64)>> {
    let cfg = config("dopri54", 1e-3, rtol, atol)?;
    let table = py
        .detach(|| {
            cltapprox::coverage_study(&model.inner, &times, &levels, n_paths, seed, workers, &cfg)
        })
        .map_err(to_py_err)?;
    Ok(table
        .rows
        .iter()
        .map(|r| (r.t, r.p, r.quantile, r.coverage, r.ci_halfwidth))
        .collect())
}

#[pyfunction]
#[pyo3(signature = (model, s, t, rtol = 1e-9, atol = 1e-12))]
fn transition_matrix(
    py: Python<'_>,
    model: &Model,
    s: f64,
    t: f64,
    rtol: f64,
    atol: f64,
) -> PyResult<Vec<Vec<f64>>> {
    let cfg = config("dopri54", 1e-3, rtol, atol)?;
    let p = py
        .detach(|| transition::transition_matrix(&model.inner, s, t, &cfg))
        .map_err(to_py_err)?;
    Ok((0..model.inner.d).map(|x| p.row(x).to_vec()).collect())
}

#[pyfunction]
#[pyo3(signature = (model, s, u_max, step, rtol = 1e-9, atol = 1e-12))]
fn mixing_profile(
    py: Python<'_>,
    model: &Model,
    s: f64,
    u_max: f64,
    step: f64,
    rtol: f64,
    atol: f64,
) -> PyResult<Vec<(f64, f64)>> {
    let cfg = config("dopri54", 1e-3, rtol, atol)?;
    py.detach(|| transition::mixing_profile(&model.inner, s, u_max, step, &cfg))
        .map_err(to_py_err)
}

#[pyfunction]
fn normal_quantile(mean: f64, var: f64, p: f64) -> PyResult<f64> {
    cltapprox::normal_quantile(mean, var, p).map_err(to_py_err)
}

#[pyfunction]
fn normal_approx_cdf(mean: f64, var: f64, z: f64) -> PyResult<f64> {
    cltapprox::normal_approx_cdf(mean, var, z).map_err(to_py_err)
}

/// Evaluate an expression of `t` and `x` (the model rate language).
#[pyfunction]
#[pyo3(signature = (text, t, x = 0.0))]
fn eval_expr(text: &str, t: f64, x: f64) -> PyResult<f64> {
    mjp_reward::expr::parse(text)
        .and_then(|e| e.eval(t, x))
        .map_err(to_py_err)
}

#[pymodule]
fn mjp_reward_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Model>()?;
    m.add_class::<MomentResult>()?;
    m.add_class::<SimResult>()?;
    m.add_class::<PeriodicResult>()?;
    m.add_function(wrap_pyfunction!(solve_moments, m)?)?;
    m.add_function(wrap_pyfunction!(monte_carlo, m)?)?;
    m.add_function(wrap_pyfunction!(solve_periodic, m)?)?;
    m.add_function(wrap_pyfunction!(solve_resetting, m)?)?;
    m.add_function(wrap_pyfunction!(coverage_study, m)?)?;
    m.add_function(wrap_pyfunction!(transition_matrix, m)?)?;
    m.add_function(wrap_pyfunction!(mixing_profile, m)?)?;
    m.add_function(wrap_pyfunction!(normal_quantile, m)?)?;
    m.add_function(wrap_pyfunction!(normal_approx_cdf, m)?)?;
    m.add_function(wrap_pyfunction!(eval_expr, m)?)?;
    Ok(())
}
