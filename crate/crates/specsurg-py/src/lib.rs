//! Python bindings. Problems, plans and results cross the boundary as JSON
//! strings in the same schema the command line uses.

use num_complex::Complex64;
use pyo3::exceptions::{PyArithmeticError, PyValueError};
use pyo3::prelude::*;
use serde_json::Value;

use specsurg::potential::{BoundaryCondition, Catalog, Potential};
use specsurg::spectra::{find_bound_states, SearchOptions};
use specsurg::verify::{self, Level};
use specsurg::{jsonfmt, solver, surgery, CMat, Error, Problem, SolverConfig, SurgeryPlan};

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Numerical(m) => PyArithmeticError::new_err(m),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn parse(text: &str) -> PyResult<Value> {
    serde_json::from_str(text).map_err(|e| PyValueError::new_err(format!("invalid JSON: {e}")))
}

fn problem(text: &str) -> PyResult<Problem> {
    let p = Problem::from_json(&parse(text)?).map_err(py_err)?;
    p.ensure_valid().map_err(py_err)?;
    Ok(p)
}

fn dump(v: &Value) -> PyResult<String> {
    jsonfmt::to_string(v).map_err(py_err)
}

fn rows(m: &CMat) -> Vec<Vec<Complex64>> {
    (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect()).collect()
}

/// Names of the closed-form potentials.
#[pyfunction]
fn catalog_names() -> Vec<&'static str> {
    Catalog::ALL.iter().map(|c| c.name()).collect()
}

/// Problem JSON for a catalog potential with Dirichlet or Neumann data.
#[pyfunction]
#[pyo3(signature = (name, n=1, boundary="dirichlet"))]
fn catalog_problem(name: &str, n: usize, boundary: &str) -> PyResult<String> {
    let cat = Catalog::from_name(name).map_err(py_err)?;
    let n = cat.fixed_dim().unwrap_or(n);
    let bc = match boundary {
        "dirichlet" => BoundaryCondition::dirichlet(n),
        "neumann" => BoundaryCondition::neumann(n),
        _ => return Err(PyValueError::new_err("boundary must be 'dirichlet' or 'neumann'")),
    };
    let p = Problem::new(Potential::catalog(cat, n).map_err(py_err)?, bc).map_err(py_err)?;
    dump(&p.to_json())
}

/// `J(k)` for complex `k`.
#[pyfunction]
fn jost_matrix(problem_json: &str, k: Complex64) -> PyResult<Vec<Vec<Complex64>>> {
    let p = problem(problem_json)?;
    let j = solver::jost_matrix(&p, k, &SolverConfig::default()).map_err(py_err)?;
    Ok(rows(&j.j))
}

/// `S(k)` for real `k ≠ 0`.
#[pyfunction]
fn scattering_matrix(problem_json: &str, k: f64) -> PyResult<Vec<Vec<Complex64>>> {
    let p = problem(problem_json)?;
    let s = solver::scattering_matrix(&p, k, &SolverConfig::default()).map_err(py_err)?;
    Ok(rows(&s))
}

/// Bound states as JSON.
#[pyfunction]
fn bound_states(problem_json: &str) -> PyResult<String> {
    let p = problem(problem_json)?;
    let spec = find_bound_states(&p, &SearchOptions::default(), &SolverConfig::default()).map_err(py_err)?;
    dump(&spec.to_json())
}

/// Apply a surgery plan; returns the result JSON (new problem, Jost factor, diagnostics).
#[pyfunction]
fn apply_surgery(problem_json: &str, plan_json: &str) -> PyResult<String> {
    let p = problem(problem_json)?;
    let plan = SurgeryPlan::from_json(&parse(plan_json)?, p.n()).map_err(py_err)?;
    let r = surgery::apply(&p, &plan, &SolverConfig::default()).map_err(py_err)?;
    dump(&r.to_json())
}

/// Run a verification suite ("golden", "battery" or "parseval"); returns the report JSON.
#[pyfunction]
#[pyo3(signature = (suite, problem_json=None))]
fn run_suite(py: Python<'_>, suite: &str, problem_json: Option<&str>) -> PyResult<String> {
    let p = match problem_json {
        Some(t) => problem(t)?,
        None => Problem::free_dirichlet(2),
    };
    let cfg = SolverConfig::default();
    let report = match suite {
        "golden" => py.detach(|| verify::golden_example89(&cfg)),
        "battery" => py.detach(|| verify::invariant_battery(&p, Level::Quick, 7, &cfg)),
        "parseval" => {
            let n = p.n();
            let v = vec![Complex64::new(1.0 / (n as f64).sqrt(), 0.0); n];
            py.detach(|| verify::parseval_smeared(&p, &v, 60.0, 2000, &cfg))
        }
        _ => return Err(PyValueError::new_err("suite must be 'golden', 'battery' or 'parseval'")),
    };
    dump(&report.to_json())
}

#[pymodule]
fn specsurg_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(catalog_names, m)?)?;
    m.add_function(wrap_pyfunction!(catalog_problem, m)?)?;
    m.add_function(wrap_pyfunction!(jost_matrix, m)?)?;
    m.add_function(wrap_pyfunction!(scattering_matrix, m)?)?;
    m.add_function(wrap_pyfunction!(bound_states, m)?)?;
    m.add_function(wrap_pyfunction!(apply_surgery, m)?)?;
    m.add_function(wrap_pyfunction!(run_suite, m)?)?;
    Ok(())
}
