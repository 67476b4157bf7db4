//! Python bindings. Structured results come back as plain dicts and lists.

use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyIterator};
use serde::Serialize;

use uniqrisk::polyapprox::{self, PolyApproxProblem, DEFAULT_C0};
use uniqrisk::simulation::{self, Family, SamplingMode, Scenario};
use uniqrisk::{bounds, EstimatorConfig, EstimatorKind, PoissonGammaProtocol, ThetaConvention};

create_exception!(uniqrisk, UniqriskError, PyException, "Base class for numerical failures.");
create_exception!(uniqrisk, NonConvergenceError, UniqriskError, "An iterative routine did not settle.");
create_exception!(uniqrisk, UnboundedError, UniqriskError, "The estimating equation has no finite solution.");

fn to_pyerr(e: uniqrisk::Error) -> PyErr {
    let msg = e.to_string();
    match e {
        uniqrisk::Error::InvalidParameter(_) | uniqrisk::Error::PairingViolation { .. } => PyValueError::new_err(msg),
        uniqrisk::Error::NonConvergence { .. } => NonConvergenceError::new_err(msg),
        uniqrisk::Error::Unbounded(_) => UnboundedError::new_err(msg),
    }
}

fn parse<T: std::str::FromStr<Err = uniqrisk::Error>>(s: &str) -> PyResult<T> {
    s.parse().map_err(to_pyerr)
}

/// Converts any serializable result into Python objects through JSON.
fn to_py<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

/// Parses `uniform`, `zipf:S` and `dirichlet:BETA` (`_` also accepted as separator).
fn parse_family(s: &str) -> PyResult<Family> {
    let (name, arg) = match s.split_once([':', '_']) {
        Some((n, a)) => (n, Some(a)),
        None => (s, None),
    };
    let value = |what: &str| -> PyResult<f64> {
        arg.ok_or_else(|| PyValueError::new_err(format!("family '{name}' needs a {what}, e.g. '{name}:1.0'")))?
            .parse()
            .map_err(|_| PyValueError::new_err(format!("bad {what} in family '{s}'")))
    };
    match name {
        "uniform" if arg.is_none() => Ok(Family::Uniform),
        "zipf" => Ok(Family::Zipf { s: value("exponent")? }),
        "dirichlet" => Ok(Family::SymDirichlet { beta: value("concentration")? }),
        _ => Err(PyValueError::new_err(format!("unknown family '{s}'"))),
    }
}

fn parse_mode(s: &str) -> PyResult<SamplingMode> {
    match s {
        "poisson" => Ok(SamplingMode::Poisson),
        "fixed" => Ok(SamplingMode::Fixed),
        _ => Err(PyValueError::new_err(format!("unknown sampling mode '{s}' (poisson or fixed)"))),
    }
}

/// Frequency-of-frequencies profile `(Z_1, Z_2, ...)` of a sample.
#[pyclass(name = "FrequencyProfile", module = "uniqrisk", frozen, eq, skip_from_py_object)]
#[derive(Clone, PartialEq)]
struct PyProfile(uniqrisk::FrequencyProfile);

#[pymethods]
impl PyProfile {
    /// Profile from the frequency of every occupied cell.
    #[new]
    fn new(frequencies: Vec<u64>) -> Self {
        Self(uniqrisk::FrequencyProfile::from_frequencies(frequencies))
    }

    /// Profile of an iterable of hashable cell keys, one per record.
    #[staticmethod]
    fn from_records(py: Python<'_>, records: &Bound<'_, PyAny>) -> PyResult<Self> {
        let counts = PyDict::new(py);
        for item in PyIterator::from_object(records)? {
            let item = item?;
            let current: u64 = match counts.get_item(&item)? {
                Some(c) => c.extract()?,
                None => 0,
            };
            counts.set_item(item, current + 1)?;
        }
        let freqs = counts.values().iter().map(|v| v.extract::<u64>()).collect::<PyResult<Vec<_>>>()?;
        Ok(Self(uniqrisk::FrequencyProfile::from_frequencies(freqs)))
    }

    /// Profile from `{i: Z_i}`.
    #[staticmethod]
    fn from_z(z: std::collections::BTreeMap<u64, u64>) -> PyResult<Self> {
        uniqrisk::FrequencyProfile::from_z(z).map(Self).map_err(to_pyerr)
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        serde_json::from_str(text).map(Self).map_err(|e| PyValueError::new_err(e.to_string()))
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.0).map_err(|e| PyValueError::new_err(e.to_string()))
    }

    /// Sample size `n`.
    #[getter]
    fn n(&self) -> u64 {
        self.0.n()
    }

    /// Occupied cells `k`.
    #[getter]
    fn k(&self) -> u64 {
        self.0.k()
    }

    #[getter]
    fn singletons(&self) -> u64 {
        self.0.singletons()
    }

    fn z(&self, i: u64) -> u64 {
        self.0.z(i)
    }

    /// `Σ_{j>=i} Z_j`.
    fn z_bar(&self, i: u64) -> PyResult<u64> {
        self.0.z_bar(i).map_err(to_pyerr)
    }

    /// Nonzero `(i, Z_i)` pairs in increasing `i`.
    fn entries(&self) -> Vec<(u64, u64)> {
        self.0.entries().collect()
    }

    fn merge(&self, other: &Self) -> Self {
        Self(self.0.merge(&other.0))
    }

    fn __repr__(&self) -> String {
        format!("FrequencyProfile(n={}, k={}, singletons={})", self.0.n(), self.0.k(), self.0.singletons())
    }
}

#[allow(clippy::too_many_arguments)]
fn config(
    lam: f64,
    population_size: Option<u64>,
    beta: Option<f64>,
    x0: Option<u64>,
    theta_convention: &str,
    poisson_gamma: &str,
) -> PyResult<EstimatorConfig> {
    let mut c = EstimatorConfig::new(lam);
    c.population_size = population_size;
    c.beta = beta;
    c.x0 = x0;
    c.theta_convention = parse::<ThetaConvention>(theta_convention)?;
    c.poisson_gamma = parse::<PoissonGammaProtocol>(poisson_gamma)?;
    Ok(c)
}

/// Estimate of the number of sample uniques that are population uniques.
#[pyfunction]
#[pyo3(signature = (profile, lam, estimator, *, population_size=None, beta=None, x0=None,
                    theta_convention="shifted", poisson_gamma="sample"))]
#[allow(clippy::too_many_arguments)]
fn estimate<'py>(
    py: Python<'py>,
    profile: &PyProfile,
    lam: f64,
    estimator: &str,
    population_size: Option<u64>,
    beta: Option<f64>,
    x0: Option<u64>,
    theta_convention: &str,
    poisson_gamma: &str,
) -> PyResult<Bound<'py, PyAny>> {
    let c = config(lam, population_size, beta, x0, theta_convention, poisson_gamma)?;
    let report = uniqrisk::estimate(&profile.0, parse::<EstimatorKind>(estimator)?, &c).map_err(to_pyerr)?;
    to_py(py, &report)
}

/// Every estimator applicable at `lam`, in table order.
#[pyfunction]
#[pyo3(signature = (profile, lam, *, population_size=None, theta_convention="shifted", poisson_gamma="sample"))]
fn estimate_all<'py>(
    py: Python<'py>,
    profile: &PyProfile,
    lam: f64,
    population_size: Option<u64>,
    theta_convention: &str,
    poisson_gamma: &str,
) -> PyResult<Bound<'py, PyAny>> {
    let c = config(lam, population_size, None, None, theta_convention, poisson_gamma)?;
    let reports = EstimatorKind::applicable(lam)
        .into_iter()
        .map(|k| uniqrisk::estimate(&profile.0, k, &c))
        .collect::<Result<Vec<_>, _>>()
        .map_err(to_pyerr)?;
    to_py(py, &reports)
}

/// `τ₁` from cell-aligned sample and population counts.
#[pyfunction]
fn true_tau1(sample: Vec<u32>, population: Vec<u32>) -> PyResult<u64> {
    uniqrisk::profile::true_tau1_dense(&sample, &population).map_err(to_pyerr)
}

#[pyfunction]
fn optimal_poisson_beta(lam: f64, n: f64) -> PyResult<f64> {
    uniqrisk::smoothing::optimal_poisson_beta(lam, n).map_err(to_pyerr)
}

#[pyfunction]
fn optimal_binomial_x0(lam: f64, n: f64) -> PyResult<u64> {
    uniqrisk::smoothing::optimal_binomial_x0(lam, n).map_err(to_pyerr)
}

#[pyfunction]
fn psi(lam: f64) -> PyResult<f64> {
    bounds::psi(lam).map_err(to_pyerr)
}

#[pyfunction]
fn a_constant(lam: f64) -> PyResult<f64> {
    bounds::a_constant(lam).map_err(to_pyerr)
}

#[pyfunction]
fn mse_bound_poisson(lam: f64, n: f64, beta: f64) -> PyResult<f64> {
    bounds::mse_bound_poisson(lam, n, beta).map_err(to_pyerr)
}

#[pyfunction]
fn nmse_bound_poisson(lam: f64, n: f64) -> PyResult<f64> {
    bounds::nmse_bound_poisson(lam, n).map_err(to_pyerr)
}

#[pyfunction]
fn mse_bound_binomial2(lam: f64, n: f64, x0: u64) -> PyResult<f64> {
    bounds::mse_bound_binomial2(lam, n, x0).map_err(to_pyerr)
}

#[pyfunction]
fn nmse_bound_binomial2(lam: f64, n: f64) -> PyResult<f64> {
    bounds::nmse_bound_binomial2(lam, n).map_err(to_pyerr)
}

#[pyfunction]
#[pyo3(signature = (lam, n, k=1.0))]
fn minimax_lower_bound(lam: f64, n: f64, k: f64) -> PyResult<f64> {
    bounds::minimax_lower_bound(lam, n, k).map_err(to_pyerr)
}

/// Every bound on `steps+1` values of λ for each `n`.
#[pyfunction]
#[pyo3(signature = (lambda_min, lambda_max, ns, steps=100, k=1.0))]
fn bound_curves<'py>(
    py: Python<'py>,
    lambda_min: f64,
    lambda_max: f64,
    ns: Vec<f64>,
    steps: usize,
    k: f64,
) -> PyResult<Bound<'py, PyAny>> {
    let curves = bounds::bound_curves(lambda_min, lambda_max, steps, &ns, k).map_err(to_pyerr)?;
    to_py(py, &curves)
}

/// Best degree-`degree` approximation of `exp(−c(t+1))` on `[−1, 1]`.
#[pyfunction]
fn best_approx_gamma<'py>(py: Python<'py>, c: f64, degree: usize) -> PyResult<Bound<'py, PyAny>> {
    let r = py.detach(|| polyapprox::best_approx_gamma(c, degree)).map_err(to_pyerr)?;
    to_py(py, &r)
}

/// Best approximation error and its lower bounds for `(ξ, B, L)`.
#[pyfunction]
fn approx_bounds<'py>(py: Python<'py>, xi: f64, b: f64, degree: usize) -> PyResult<Bound<'py, PyAny>> {
    let problem = PolyApproxProblem::new(xi, b, degree).map_err(to_pyerr)?;
    let r = py.detach(|| polyapprox::approx_bounds(&problem)).map_err(to_pyerr)?;
    to_py(py, &r)
}

/// As [`approx_bounds`], with `ξ` and `B` derived from `n` and `λ`.
#[pyfunction]
#[pyo3(signature = (n, lam, degree, c0=DEFAULT_C0))]
fn approx_bounds_for<'py>(py: Python<'py>, n: f64, lam: f64, degree: usize, c0: f64) -> PyResult<Bound<'py, PyAny>> {
    let problem = PolyApproxProblem::from_n_lambda(n, lam, degree, c0).map_err(to_pyerr)?;
    let r = py.detach(|| polyapprox::approx_bounds(&problem)).map_err(to_pyerr)?;
    let out = to_py(py, &r)?;
    out.set_item("n", n)?;
    out.set_item("lambda", lam)?;
    out.set_item("b_in_range", problem.b_in_range(n, lam))?;
    Ok(out)
}

/// Monte Carlo run of one scenario. `family` is `uniform`, `zipf:S` or `dirichlet:BETA`.
#[pyfunction]
#[pyo3(signature = (family, cells, population_size, sample_size, *, iterations=100, seed=0,
                    mode="poisson", estimators=None, poisson_gamma="sample"))]
#[allow(clippy::too_many_arguments)]
fn simulate<'py>(
    py: Python<'py>,
    family: &str,
    cells: usize,
    population_size: u64,
    sample_size: u64,
    iterations: usize,
    seed: u64,
    mode: &str,
    estimators: Option<Vec<String>>,
    poisson_gamma: &str,
) -> PyResult<Bound<'py, PyAny>> {
    let scenario = Scenario::new(parse_family(family)?, cells, population_size, sample_size)
        .with_iterations(iterations)
        .with_seed(seed)
        .with_mode(parse_mode(mode)?)
        .with_poisson_gamma(parse(poisson_gamma)?);
    let kinds = match estimators {
        Some(names) => names.iter().map(|s| parse::<EstimatorKind>(s)).collect::<PyResult<Vec<_>>>()?,
        None => EstimatorKind::applicable(scenario.lambda()),
    };
    let report = py.detach(|| simulation::run_scenario_with(&scenario, &kinds)).map_err(to_pyerr)?;
    to_py(py, &report)
}

/// One of the three simulation tables, optionally at reduced scale.
#[pyfunction]
#[pyo3(signature = (table, *, seed=0, iterations=100, scale=1.0))]
fn reproduce_table<'py>(py: Python<'py>, table: u8, seed: u64, iterations: usize, scale: f64) -> PyResult<Bound<'py, PyAny>> {
    let report = py.detach(|| simulation::reproduce_table(table, seed, iterations, scale)).map_err(to_pyerr)?;
    let out = to_py(py, &report)?;
    out.set_item("labels", report.labels())?;
    Ok(out)
}

#[pymodule]
#[pyo3(name = "uniqrisk")]
fn uniqrisk_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    let py = m.py();
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add("UniqriskError", py.get_type::<UniqriskError>())?;
    m.add("NonConvergenceError", py.get_type::<NonConvergenceError>())?;
    m.add("UnboundedError", py.get_type::<UnboundedError>())?;
    m.add_class::<PyProfile>()?;
    m.add_function(wrap_pyfunction!(estimate, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_all, m)?)?;
    m.add_function(wrap_pyfunction!(true_tau1, m)?)?;
    m.add_function(wrap_pyfunction!(optimal_poisson_beta, m)?)?;
    m.add_function(wrap_pyfunction!(optimal_binomial_x0, m)?)?;
    m.add_function(wrap_pyfunction!(psi, m)?)?;
    m.add_function(wrap_pyfunction!(a_constant, m)?)?;
    m.add_function(wrap_pyfunction!(mse_bound_poisson, m)?)?;
    m.add_function(wrap_pyfunction!(nmse_bound_poisson, m)?)?;
    m.add_function(wrap_pyfunction!(mse_bound_binomial2, m)?)?;
    m.add_function(wrap_pyfunction!(nmse_bound_binomial2, m)?)?;
    m.add_function(wrap_pyfunction!(minimax_lower_bound, m)?)?;
    m.add_function(wrap_pyfunction!(bound_curves, m)?)?;
    m.add_function(wrap_pyfunction!(best_approx_gamma, m)?)?;
    m.add_function(wrap_pyfunction!(approx_bounds, m)?)?;
    m.add_function(wrap_pyfunction!(approx_bounds_for, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(reproduce_table, m)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn families_parse() {
        assert_eq!(parse_family("uniform").unwrap(), Family::Uniform);
        assert_eq!(parse_family("zipf:0.5").unwrap(), Family::Zipf { s: 0.5 });
        assert_eq!(parse_family("zipf_1").unwrap(), Family::Zipf { s: 1.0 });
        assert_eq!(parse_family("dirichlet:2").unwrap(), Family::SymDirichlet { beta: 2.0 });
        assert_eq!(parse_mode("fixed").unwrap(), SamplingMode::Fixed);
    }
}
