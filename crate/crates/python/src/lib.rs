//! Python bindings. Series and problems cross the boundary as JSON
//! documents, the same ones the `treelin` CLI reads and writes.

use pyo3::exceptions::{PyArithmeticError, PyValueError};
use pyo3::prelude::*;

use treelin_core::diagnostics;
use treelin_core::divisors::{self, DivisorError, FracOmega};
use treelin_core::io::{self, Problem, ProblemDoc, SeriesDoc};
use treelin_core::linearize::{self as lin, LinearizeError, Method, SolveOptions};
use treelin_core::trees;

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn linearize_err(e: LinearizeError) -> PyErr {
    match e {
        LinearizeError::Divisor(DivisorError::DivisorBelowTolerance { .. } | DivisorError::ResonantSpectrum { .. }) => PyArithmeticError::new_err(e.to_string()),
        other => value_err(other),
    }
}

fn parse_method(name: &str) -> PyResult<Method> {
    match name {
        "recursive" => Ok(Method::Recursive),
        "tree" => Ok(Method::Tree),
        "fixedpoint" => Ok(Method::FixedPoint),
        other => Err(PyValueError::new_err(format!("unknown method {other:?}"))),
    }
}

/// Solve a problem document; returns the solution `h` as a series document.
#[pyfunction]
#[pyo3(signature = (problem, method = "recursive", degree = None))]
fn linearize(problem: &str, method: &str, degree: Option<u32>) -> PyResult<String> {
    let doc = ProblemDoc::parse(problem).map_err(value_err)?;
    let degree = degree.unwrap_or(doc.degree);
    let method = parse_method(method)?;
    let opts = SolveOptions::default();
    let h = match doc.to_problem().map_err(value_err)? {
        Problem::Germ(g) => lin::solve_germ(&g, degree, method, &opts).map_err(linearize_err)?.h,
        Problem::Field(v) => lin::solve_field(&v, degree, method, &opts).map_err(linearize_err)?.h,
        Problem::Inversion { g } => lin::solve_inversion(&g, degree, method).map_err(linearize_err)?.h,
    };
    Ok(io::to_json(&SeriesDoc::from_series(&h)))
}

/// Partial sums `Σ_{k<=K} log q_{k+1} / q_k` for `K = 0..=terms`.
#[pyfunction]
fn bruno_sums(omega: f64, terms: usize) -> PyResult<Vec<f64>> {
    let cf = divisors::continued_fraction(omega, terms + 2).map_err(value_err)?;
    divisors::bruno_series_1d(&cf, terms).map_err(value_err)
}

/// `Ω(p)`: the smallest distance of `ν·ω` to the integers over `0 < |ν| <= p`.
#[pyfunction]
fn omega_frac(omega: Vec<f64>, p: u64) -> f64 {
    FracOmega::new(omega).value(p)
}

/// Number of plane rooted trees with `n` nodes.
#[pyfunction]
fn forest_size(n: usize) -> usize {
    trees::enumerate_forest(n).len()
}

/// Empirical radius of convergence of the linearization of `λz(1 − z^k/k)`.
#[pyfunction]
fn germ_family_radius(k: u32, omega: f64, degree: u32) -> PyResult<Option<f64>> {
    let r = diagnostics::germ_family_radius(k, omega, degree).map_err(value_err)?;
    Ok(r.growth.radius)
}

#[pymodule]
fn treelin(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(linearize, m)?)?;
    m.add_function(wrap_pyfunction!(bruno_sums, m)?)?;
    m.add_function(wrap_pyfunction!(omega_frac, m)?)?;
    m.add_function(wrap_pyfunction!(forest_size, m)?)?;
    m.add_function(wrap_pyfunction!(germ_family_radius, m)?)?;
    Ok(())
}
