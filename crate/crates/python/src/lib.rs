//! Python bindings for `gradvi`.
//!
//! Problems and study specs are passed as JSON strings in the same format the
//! command line tool reads; results come back as dicts of floats and lists.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use gradvi::experiments::{self, StudySpec};
use gradvi::grid::Grid;
use gradvi::lagrange::{self, ContactTolerances};
use gradvi::oracle::{self, AdmmOptions, OracleError};
use gradvi::penalty::{self, PenaltyParams};
use gradvi::problem::{Problem, SampledProblem};
use gradvi::solver::{self, ContinuationResult, SolveOptions};

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn runtime_err(e: impl std::fmt::Display) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

fn json_to_py<'py>(py: Python<'py>, text: &str) -> PyResult<Bound<'py, PyAny>> {
    py.import("json")?.call_method1("loads", (text,))
}

fn setup(problem: &str, n: usize) -> PyResult<(Grid, SampledProblem)> {
    let problem = Problem::from_json(problem).map_err(value_err)?;
    let grid = Grid::uniform(problem.domain.clone(), n).map_err(value_err)?;
    let data = problem.sample(&grid).map_err(value_err)?;
    Ok((grid, data))
}

fn continuation(
    grid: &Grid,
    data: &SampledProblem,
    eps_schedule: Option<Vec<f64>>,
    r: f64,
    allow_unresolved_eps: bool,
) -> PyResult<ContinuationResult> {
    let schedule = eps_schedule.unwrap_or_else(solver::default_schedule);
    let opts = SolveOptions {
        allow_unresolved_eps,
        ..SolveOptions::default()
    };
    solver::continuation_solve(grid, data, &schedule, r, &opts).map_err(runtime_err)
}

/// `k_eps(s)`.
#[pyfunction]
#[pyo3(signature = (s, eps, r = penalty::DEFAULT_R))]
fn k_eps(s: f64, eps: f64, r: f64) -> PyResult<f64> {
    let p = PenaltyParams::new(eps, r).map_err(value_err)?;
    Ok(penalty::k_eps(s, &p))
}

/// `theta_eps(s)`.
#[pyfunction]
#[pyo3(signature = (s, eps, r = penalty::DEFAULT_R))]
fn theta_eps(s: f64, eps: f64, r: f64) -> PyResult<f64> {
    let p = PenaltyParams::new(eps, r).map_err(value_err)?;
    Ok(penalty::theta_eps(s, &p))
}

/// Node coordinates of the uniform grid, one list per node.
#[pyfunction]
fn grid_points(problem: &str, n: usize) -> PyResult<Vec<Vec<f64>>> {
    let (grid, _) = setup(problem, n)?;
    Ok((0..grid.node_count()).map(|k| grid.point(k)).collect())
}

/// Penalized solve along an eps schedule; returns the finest converged entry.
#[pyfunction]
#[pyo3(signature = (problem, n, eps_schedule = None, r = penalty::DEFAULT_R, allow_unresolved_eps = false))]
fn solve<'py>(
    py: Python<'py>,
    problem: &str,
    n: usize,
    eps_schedule: Option<Vec<f64>>,
    r: f64,
    allow_unresolved_eps: bool,
) -> PyResult<Bound<'py, PyDict>> {
    let (grid, data) = setup(problem, n)?;
    let cr = continuation(&grid, &data, eps_schedule, r, allow_unresolved_eps)?;
    let fin = cr.finest().ok_or_else(|| runtime_err("no eps in the schedule converged"))?;
    let out = PyDict::new(py);
    out.set_item("eps", fin.eps)?;
    out.set_item("converged", fin.converged)?;
    out.set_item("newton_iters", fin.newton_iters)?;
    out.set_item("residual_norm", fin.residual_norm)?;
    out.set_item("u", fin.u.0.clone())?;
    out.set_item("khat", fin.khat.0.clone())?;
    out.set_item("theta", fin.theta.0.clone())?;
    out.set_item("monitors", json_to_py(py, &serde_json::to_string(&fin.monitors).map_err(runtime_err)?)?)?;
    out.set_item("warnings", cr.warnings.clone())?;
    Ok(out)
}

/// ADMM solution of the variational inequality.
#[pyfunction]
#[pyo3(signature = (problem, n, max_iters = None))]
fn solve_oracle<'py>(py: Python<'py>, problem: &str, n: usize, max_iters: Option<usize>) -> PyResult<Bound<'py, PyDict>> {
    let (grid, data) = setup(problem, n)?;
    let mut opts = AdmmOptions::default();
    if let Some(m) = max_iters {
        opts.max_iters = m;
    }
    let sol = match oracle::solve_vi_admm(&grid, &data, &opts) {
        Ok(s) => s,
        Err(OracleError::MaxItersExceeded(s)) => *s,
        Err(e) => return Err(runtime_err(e)),
    };
    let out = PyDict::new(py);
    out.set_item("u", sol.u.0.clone())?;
    out.set_item("energy", sol.energy)?;
    out.set_item("iterations", sol.iterations)?;
    out.set_item("converged", sol.converged)?;
    out.set_item("grad_violation", sol.grad_violation)?;
    out.set_item("obstacle_violation", sol.obstacle_violation)?;
    Ok(out)
}

/// Complementarity report for the finest penalized solution.
#[pyfunction]
#[pyo3(signature = (problem, n, eps_schedule = None, r = penalty::DEFAULT_R, allow_unresolved_eps = false))]
fn complementarity<'py>(
    py: Python<'py>,
    problem: &str,
    n: usize,
    eps_schedule: Option<Vec<f64>>,
    r: f64,
    allow_unresolved_eps: bool,
) -> PyResult<Bound<'py, PyAny>> {
    let (grid, data) = setup(problem, n)?;
    let cr = continuation(&grid, &data, eps_schedule, r, allow_unresolved_eps)?;
    let fin = cr.finest().ok_or_else(|| runtime_err("no eps in the schedule converged"))?;
    let gmax = data.g_cells.as_ref().map_or(1.0, |g| g.max());
    let tol = ContactTolerances::for_eps(fin.eps, gmax);
    let lf = lagrange::extract_fields(&grid, &data, &cr, tol).map_err(runtime_err)?;
    let rep = lagrange::complementarity_report(&grid, &data, &lf);
    json_to_py(py, &serde_json::to_string(&rep).map_err(runtime_err)?)
}

/// Runs a study from a JSON spec and returns its report.
#[pyfunction]
fn run_study<'py>(py: Python<'py>, spec: &str) -> PyResult<Bound<'py, PyAny>> {
    let spec = StudySpec::from_json(spec).map_err(value_err)?;
    let rep = py.detach(|| experiments::run_study(&spec)).map_err(runtime_err)?;
    json_to_py(py, &serde_json::to_string(&rep).map_err(runtime_err)?)
}

#[pymodule]
fn pygradvi(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(k_eps, m)?)?;
    m.add_function(wrap_pyfunction!(theta_eps, m)?)?;
    m.add_function(wrap_pyfunction!(grid_points, m)?)?;
    m.add_function(wrap_pyfunction!(solve, m)?)?;
    m.add_function(wrap_pyfunction!(solve_oracle, m)?)?;
    m.add_function(wrap_pyfunction!(complementarity, m)?)?;
    m.add_function(wrap_pyfunction!(run_study, m)?)?;
    Ok(())
}
