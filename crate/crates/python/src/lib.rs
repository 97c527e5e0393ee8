//! Python bindings: basis construction, default penalties, simulation
//! metrics and the analyze pipeline on in-memory arrays.

use nalgebra::{DMatrix, DVector};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;
use reluctant_cli::analyze::{analyze as run_analysis, AnalysisOptions};
use reluctant_cli::dataset::Dataset;
use reluctant_core::group_lasso;
use reluctant_core::selective_mle::Method;
use reluctant_core::sim_harness::{run_replications, summarize, SimSetting};
use reluctant_core::spline_basis::BasisConfig;

fn to_py(e: reluctant_core::Error) -> PyErr {
    match e {
        reluctant_core::Error::InvalidArgument(_) | reluctant_core::Error::InvalidBasisSize(_) => {
            PyValueError::new_err(e.to_string())
        }
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn parse_methods(methods: Option<Vec<String>>) -> PyResult<Vec<Method>> {
    match methods {
        None => Ok(Method::ALL.to_vec()),
        Some(v) => v.iter().map(|s| s.parse::<Method>().map_err(to_py)).collect(),
    }
}

/// B-spline basis of `x` as a list of rows.
#[pyfunction]
#[pyo3(signature = (x, degree = 2, df = 2))]
fn bspline_basis(x: Vec<f64>, degree: usize, df: usize) -> PyResult<Vec<Vec<f64>>> {
    let cfg = BasisConfig {
        degree,
        df,
        ..BasisConfig::default()
    };
    let b = reluctant_core::spline_basis::bspline_basis(&x, &cfg).map_err(to_py)?;
    Ok(b.row_iter().map(|r| r.iter().copied().collect()).collect())
}

/// Per-group penalties `0.5·σ·√n·√B_j·√(2 ln q)`.
#[pyfunction]
fn default_lambda(sigma: f64, n: usize, group_sizes: Vec<usize>) -> PyResult<Vec<f64>> {
    let q = group_sizes.iter().sum();
    group_lasso::default_lambda(sigma, n, &group_sizes, q).map_err(to_py)
}

/// Runs one simulation configuration and returns one metrics dict per method.
#[pyfunction]
#[pyo3(signature = (setting = 1, sigma = None, replications = 50, seed = 2024, methods = None))]
fn simulate<'py>(
    py: Python<'py>,
    setting: u8,
    sigma: Option<f64>,
    replications: usize,
    seed: u64,
    methods: Option<Vec<String>>,
) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let mut s = SimSetting::preset(setting).map_err(to_py)?;
    if let Some(v) = sigma {
        s.sigma = v;
    }
    s.replications = replications;
    s.seed = seed;
    s.methods = parse_methods(methods)?;
    s.validate().map_err(to_py)?;
    let records = py.detach(|| run_replications(&s)).map_err(to_py)?;
    s.methods
        .iter()
        .map(|&m| {
            let mm = summarize(&records, m, s.t0, s.alpha);
            let d = PyDict::new(py);
            d.set_item("method", m.as_str())?;
            d.set_item("replications", mm.replications)?;
            d.set_item("n_pivots", mm.n_pivots)?;
            d.set_item("ks", mm.ks)?;
            d.set_item("mean_ci_length", mm.mean_ci_length)?;
            d.set_item("coverage", mm.coverage)?;
            d.set_item("precision", mm.precision)?;
            d.set_item("recall", mm.recall)?;
            d.set_item("f1", mm.f1)?;
            Ok(d)
        })
        .collect()
}

/// Fits the requested methods to `(x, y)` and returns one dict per
/// interaction report. Pair indices are 0-based.
#[pyfunction]
#[pyo3(signature = (x, y, names = None, seed = 2024, alpha = 0.1, r = 0.9, methods = None))]
#[allow(clippy::too_many_arguments)]
fn analyze<'py>(
    py: Python<'py>,
    x: Vec<Vec<f64>>,
    y: Vec<f64>,
    names: Option<Vec<String>>,
    seed: u64,
    alpha: f64,
    r: f64,
    methods: Option<Vec<String>>,
) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let n = x.len();
    let p = x.first().map_or(0, Vec::len);
    if y.len() != n || x.iter().any(|row| row.len() != p) {
        return Err(PyValueError::new_err("x must be a rectangular n by p array matching len(y)"));
    }
    let names = names.unwrap_or_else(|| (1..=p).map(|j| format!("x{j}")).collect());
    if names.len() != p {
        return Err(PyValueError::new_err("names must have one entry per column"));
    }
    let data = Dataset {
        names,
        response: "y".into(),
        x: DMatrix::from_fn(n, p, |i, j| x[i][j]),
        y: DVector::from_vec(y),
        dropped: 0,
    };
    let opts = AnalysisOptions {
        r,
        alpha,
        seed,
        methods: parse_methods(methods)?,
        basis: BasisConfig::default(),
    };
    let analysis = py.detach(|| run_analysis(&data, &opts)).map_err(to_py)?;
    let mut out = Vec::new();
    for fit in &analysis.fits {
        for rep in &fit.reports {
            let d = PyDict::new(py);
            d.set_item("method", fit.method.as_str())?;
            d.set_item("j", rep.pair.0)?;
            d.set_item("k", rep.pair.1)?;
            d.set_item("theta", rep.theta_mle)?;
            d.set_item("stderr", rep.stderr)?;
            d.set_item("pvalue", rep.p_value)?;
            d.set_item("ci", (rep.ci.0, rep.ci.1))?;
            d.set_item("status", rep.status.as_str())?;
            out.push(d);
        }
    }
    Ok(out)
}

#[pymodule]
fn reluctant(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(bspline_basis, m)?)?;
    m.add_function(wrap_pyfunction!(default_lambda, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(analyze, m)?)?;
    Ok(())
}
