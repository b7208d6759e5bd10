//! Python bindings. Plans are passed as the same flat key-value text the
//! CLI reads; structured results come back as JSON strings.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use mdballs::harness;
use mdballs::metrics;
use mdballs::oracle;
use mdballs::process::{self, ProcessSpec};

fn py_err(e: mdballs::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// Execute a plan; returns (csv, summary_json). Output files are written
/// only if the plan names an output prefix.
#[pyfunction]
fn run_plan(plan: &str) -> PyResult<(String, String)> {
    let plan = harness::parse_plan(plan).map_err(py_err)?;
    let out = harness::run_plan(&plan).map_err(py_err)?;
    Ok((out.csv, out.summary_json))
}

/// Run the plan's base config once and return (loads, gap_report_json),
/// where loads is the final D x n load matrix.
#[pyfunction]
fn simulate_state(plan: &str) -> PyResult<(Vec<Vec<f64>>, String)> {
    let plan = harness::parse_plan(plan).map_err(py_err)?;
    let cfg = plan.configs().map_err(py_err)?[0].1.clone();
    let lm = process::run_to_state(&cfg).map_err(py_err)?;
    let loads = (0..lm.dims()).map(|d| lm.dim_loads(d).to_vec()).collect();
    let report = metrics::gap_report(&lm);
    Ok((loads, serde_json::to_string(&report).unwrap()))
}

/// Closed-form rank-placement probabilities for an allocation rule.
#[pyfunction]
#[pyo3(signature = (kind, n, d=2, beta=0.5))]
fn probability_vector(kind: &str, n: usize, d: usize, beta: f64) -> PyResult<Vec<f64>> {
    let spec = match kind {
        "one-choice" => ProcessSpec::OneChoice,
        "d-choice" => ProcessSpec::DChoice { d },
        "beta-choice" => ProcessSpec::BetaChoice { beta },
        other => return Err(PyValueError::new_err(format!("unknown kind `{other}`"))),
    };
    spec.validate(n).map_err(py_err)?;
    Ok(process::probability_vector(&spec, n).p)
}

/// The binomial tail bound (mu/(mu+t))^{mu+t} e^t.
#[pyfunction]
fn chernoff_tail(mu: f64, t: f64) -> f64 {
    metrics::chernoff_tail(mu, t)
}

/// Freeze the state at ball count `at` and estimate the one-step potential
/// drift; returns a JSON report.
#[pyfunction]
#[pyo3(signature = (plan, at, samples=10_000))]
fn drift(plan: &str, at: u64, samples: usize) -> PyResult<String> {
    let plan = harness::parse_plan(plan).map_err(py_err)?;
    let report = harness::drift_at(&plan, at, samples).map_err(py_err)?;
    Ok(serde_json::to_string(&report).unwrap())
}

/// Exact expected max gap of a tiny instance, as a float.
#[pyfunction]
fn exact_expected_gap(plan: &str) -> PyResult<f64> {
    let plan = harness::parse_plan(plan).map_err(py_err)?;
    let cfg = plan.configs().map_err(py_err)?[0].1.clone();
    let dist = oracle::enumerate_exact(&cfg).map_err(py_err)?;
    Ok(dist.expected_gap_f64())
}

/// Enumerate a tiny instance exactly and chi-square the simulator against
/// it; returns a JSON report.
#[pyfunction]
#[pyo3(signature = (plan, trials=100_000))]
fn oracle_check(plan: &str, trials: usize) -> PyResult<String> {
    let plan = harness::parse_plan(plan).map_err(py_err)?;
    let report = harness::oracle_check(&plan, trials).map_err(py_err)?;
    Ok(serde_json::to_string(&report).unwrap())
}

#[pymodule]
fn mdballs_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(run_plan, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_state, m)?)?;
    m.add_function(wrap_pyfunction!(probability_vector, m)?)?;
    m.add_function(wrap_pyfunction!(chernoff_tail, m)?)?;
    m.add_function(wrap_pyfunction!(drift, m)?)?;
    m.add_function(wrap_pyfunction!(exact_expected_gap, m)?)?;
    m.add_function(wrap_pyfunction!(oracle_check, m)?)?;
    Ok(())
}
