//! Python module `microlocal_py`: bracket orders, spectra, Gevrey fits and
//! the batch pipelines, with errors raised as `ValueError`/`RuntimeError`.

use std::path::Path;

use microlocal::gevrey::fit_decay;
use microlocal::pipeline::{run, Overrides, Pipeline, PipelineError, RunConfig};
use microlocal::spectral::{anharmonic_eigs, SpectralOptions};
use microlocal::symbolic::{compute_nu, parse_rational, parse_vector_fields, Nu, VectorFieldSystem};
use num_rational::BigRational;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

fn value_err(e: impl ToString) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn pipeline_err(e: PipelineError) -> PyErr {
    match e.exit_code() {
        2 => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

/// Bracket order at `point` (2n rationals as strings; default (0; e_n)).
/// Returns `None` when no bracket up to `max_len` is nonzero.
#[pyfunction]
#[pyo3(signature = (fields, point=None, max_len=8))]
fn nu(fields: &str, point: Option<Vec<String>>, max_len: usize) -> PyResult<Option<usize>> {
    let sys = parse_vector_fields(fields).map_err(value_err)?;
    nu_of(&sys, point, max_len)
}

/// Bracket order of the Grushin system {ξ₁, x₁^{k−1}ξ₂} at (0; e₂).
#[pyfunction]
fn grushin_nu(k: u32) -> PyResult<Option<usize>> {
    if k < 1 {
        return Err(value_err("k must be at least 1"));
    }
    nu_of(&VectorFieldSystem::grushin(k), None, 8)
}

fn nu_of(sys: &VectorFieldSystem, point: Option<Vec<String>>, max_len: usize) -> PyResult<Option<usize>> {
    let n = sys.dim();
    let pt: Vec<BigRational> = match point {
        Some(v) => v.iter().map(|s| parse_rational(s)).collect::<Result<_, _>>().map_err(value_err)?,
        None => (0..2 * n).map(|i| microlocal::symbolic::rational(i64::from(i == 2 * n - 1))).collect(),
    };
    if pt.len() != 2 * n {
        return Err(value_err(format!("point needs {} entries", 2 * n)));
    }
    let report = compute_nu(sys, &pt, max_len).map_err(value_err)?;
    Ok(match report.nu {
        Nu::Finite(v) => Some(v),
        Nu::Infinite { .. } => None,
    })
}

/// Lowest `count` eigenvalues of −d²/dx² + x^{2(k−1)}.
#[pyfunction]
#[pyo3(signature = (k, count, npoints=2001))]
fn eigenvalues(k: u32, count: usize, npoints: usize) -> PyResult<Vec<f64>> {
    let opts = SpectralOptions {
        npoints,
        ..Default::default()
    };
    let pairs = anharmonic_eigs(k, count, opts).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    Ok(pairs.iter().map(|p| p.energy).collect())
}

/// Fitted Gevrey order ŝ of magnitudes `m` over `lambdas`, or `None` for no decay.
#[pyfunction]
fn gevrey_order(lambdas: Vec<f64>, m: Vec<f64>) -> PyResult<Option<f64>> {
    Ok(fit_decay(&lambdas, &m).map_err(value_err)?.s_hat)
}

/// Runs a pipeline from TOML text and returns the manifest as a JSON string.
#[pyfunction]
#[pyo3(signature = (pipeline, config, output, seed=None))]
fn run_pipeline(py: Python<'_>, pipeline: &str, config: &str, output: &str, seed: Option<u64>) -> PyResult<String> {
    let verb: Pipeline = pipeline.parse().map_err(pipeline_err)?;
    let ov = Overrides {
        output: Some(output.into()),
        seed,
        threads: None,
    };
    let cfg = RunConfig::parse(Some(verb), config, Path::new("."), &ov).map_err(pipeline_err)?;
    let outcome = py.detach(|| run(&cfg)).map_err(pipeline_err)?;
    serde_json::to_string(&outcome.manifest).map_err(|e| PyRuntimeError::new_err(e.to_string()))
}

#[pymodule]
fn microlocal_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_function(wrap_pyfunction!(nu, m)?)?;
    m.add_function(wrap_pyfunction!(grushin_nu, m)?)?;
    m.add_function(wrap_pyfunction!(eigenvalues, m)?)?;
    m.add_function(wrap_pyfunction!(gevrey_order, m)?)?;
    m.add_function(wrap_pyfunction!(run_pipeline, m)?)?;
    Ok(())
}
