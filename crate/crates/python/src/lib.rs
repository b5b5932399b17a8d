//! Python bindings. Structured results come back as plain dicts decoded from
//! the engine's JSON form, so they match `result.json` field for field.

use dualcert::bounds::{
    clopper_pearson_lower, cohen_bound, cohen_radius, gaussian_bilateral_radius, teng_bound, teng_radius,
    RadiusOutcome,
};
use dualcert::classifier::exact_smoothed_value;
use dualcert::discrepancy::{worst_delta, RatioSample};
use dualcert::pipeline::{certify as certify_impl, certify_radius as certify_radius_impl, SampleCounts};
use dualcert::{
    BinomialEvidence, Classifier, ConfidenceBudget, Error, LambdaGrid, Norm, RandomStream, SmoothingFamily,
    SyntheticClassifier, ThreatModel,
};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyString};
use serde::Serialize;

fn err(e: Error) -> PyErr {
    match e {
        Error::Domain(_) | Error::Config(_) | Error::Unsupported(_) | Error::Singularity(_) => {
            PyValueError::new_err(e.to_string())
        }
        e => PyRuntimeError::new_err(e.to_string()),
    }
}

fn to_py<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let s = serde_json::to_string(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (s,))
}

fn from_py<T: serde::de::DeserializeOwned>(obj: &Bound<'_, PyAny>) -> PyResult<T> {
    let s: String = if obj.is_instance_of::<PyString>() {
        obj.extract()?
    } else {
        obj.py().import("json")?.call_method1("dumps", (obj,))?.extract()?
    };
    serde_json::from_str(&s).map_err(|e| PyValueError::new_err(e.to_string()))
}

fn parse_norm(name: &str) -> PyResult<Norm> {
    match name {
        "l1" => Ok(Norm::L1),
        "l2" => Ok(Norm::L2),
        "linf" => Ok(Norm::Linf),
        other => Err(PyValueError::new_err(format!("unknown norm {other:?}; expected l1, l2 or linf"))),
    }
}

/// A smoothing distribution.
#[pyclass(name = "Family", frozen, module = "dualcert_py")]
struct PyFamily {
    inner: SmoothingFamily,
}

#[pymethods]
impl PyFamily {
    /// From a dict or JSON string such as `{"kind": "gaussian", "dimension": 3, "sigma": 0.5}`.
    #[new]
    fn new(spec: &Bound<'_, PyAny>) -> PyResult<Self> {
        Ok(Self { inner: from_py(spec)? })
    }

    #[staticmethod]
    fn gaussian(dim: usize, sigma: f64) -> PyResult<Self> {
        Ok(Self { inner: SmoothingFamily::gaussian(dim, sigma).map_err(err)? })
    }

    #[staticmethod]
    fn laplacian(dim: usize, b: f64) -> PyResult<Self> {
        Ok(Self { inner: SmoothingFamily::laplacian(dim, b).map_err(err)? })
    }

    #[staticmethod]
    fn l2_power_tail(dim: usize, k: f64, sigma: f64) -> PyResult<Self> {
        Ok(Self { inner: SmoothingFamily::l2_power_tail(dim, k, sigma).map_err(err)? })
    }

    #[staticmethod]
    fn l1_power_tail(dim: usize, k: f64, b: f64) -> PyResult<Self> {
        Ok(Self { inner: SmoothingFamily::l1_power_tail(dim, k, b).map_err(err)? })
    }

    #[staticmethod]
    fn linf_pure(dim: usize, k: f64, sigma: f64) -> PyResult<Self> {
        Ok(Self { inner: SmoothingFamily::linf_pure(dim, k, sigma).map_err(err)? })
    }

    #[staticmethod]
    fn mixed_norm(dim: usize, k: f64, sigma: f64) -> PyResult<Self> {
        Ok(Self { inner: SmoothingFamily::mixed_norm(dim, k, sigma).map_err(err)? })
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn kind(&self) -> &'static str {
        self.inner.variant().tag()
    }

    fn to_dict<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner)
    }

    /// `n` draws as a list of rows.
    #[pyo3(signature = (n, seed=0, stream_id=0))]
    fn sample(&self, py: Python<'_>, n: usize, seed: u64, stream_id: u64) -> PyResult<Vec<Vec<f64>>> {
        let f = self.inner;
        let batch = py.detach(|| f.sample(n, &RandomStream::new(seed, stream_id))).map_err(err)?;
        Ok(batch.rows().map(<[f64]>::to_vec).collect())
    }

    fn log_density_ratio_shift(&self, z: Vec<f64>, delta: Vec<f64>) -> PyResult<f64> {
        self.inner.log_density_ratio_shift(&z, &delta).map_err(err)
    }

    fn radius_stats<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner.radius_stats().map_err(err)?)
    }

    fn __repr__(&self) -> String {
        format!("Family({})", serde_json::to_string(&self.inner).unwrap_or_default())
    }
}

/// A norm ball of perturbations.
#[pyclass(name = "Threat", frozen, module = "dualcert_py")]
struct PyThreat {
    inner: ThreatModel,
}

#[pymethods]
impl PyThreat {
    #[new]
    fn new(norm: &str, radius: f64) -> PyResult<Self> {
        Ok(Self { inner: ThreatModel::new(parse_norm(norm)?, radius).map_err(err)? })
    }

    #[getter]
    fn norm(&self) -> &'static str {
        self.inner.norm.name()
    }

    #[getter]
    fn radius(&self) -> f64 {
        self.inner.radius
    }

    fn __repr__(&self) -> String {
        format!("Threat({:?}, {})", self.inner.norm.name(), self.inner.radius)
    }
}

/// Python callable `f(rows) -> labels`, called once per batch.
struct CallableClassifier {
    f: Py<PyAny>,
}

impl Classifier for CallableClassifier {
    fn input_dim(&self) -> Option<usize> {
        None
    }

    fn evaluate(&mut self, points: &[f64], dim: usize) -> dualcert::Result<Vec<u8>> {
        let rows: Vec<Vec<f64>> = points.chunks_exact(dim).map(<[f64]>::to_vec).collect();
        let n = rows.len();
        Python::attach(|py| {
            let out = self.f.call1(py, (rows,)).and_then(|o| o.extract::<Vec<i64>>(py));
            match out {
                Ok(v) if v.len() == n && v.iter().all(|l| *l == 0 || *l == 1) => Ok(v.into_iter().map(|l| l as u8).collect()),
                Ok(v) => Err(Error::Transport(format!("classifier returned {} labels for {n} rows, or a label outside {{0, 1}}", v.len()))),
                Err(e) => Err(Error::Transport(format!("classifier raised: {e}"))),
            }
        })
    }
}

enum AnyClassifier {
    Synthetic(SyntheticClassifier),
    Callable(CallableClassifier),
}

impl AnyClassifier {
    fn from_py(obj: &Bound<'_, PyAny>) -> PyResult<Self> {
        if obj.is_callable() {
            return Ok(Self::Callable(CallableClassifier { f: obj.clone().unbind() }));
        }
        let c: SyntheticClassifier = from_py(obj)?;
        c.validate().map_err(err)?;
        Ok(Self::Synthetic(c))
    }
}

impl Classifier for AnyClassifier {
    fn input_dim(&self) -> Option<usize> {
        match self {
            Self::Synthetic(c) => c.input_dim(),
            Self::Callable(c) => c.input_dim(),
        }
    }

    fn evaluate(&mut self, points: &[f64], dim: usize) -> dualcert::Result<Vec<u8>> {
        match self {
            Self::Synthetic(c) => c.evaluate(points, dim),
            Self::Callable(c) => c.evaluate(points, dim),
        }
    }
}

fn grid(lambda_start: f64, lambda_end: f64, lambda_count: usize) -> PyResult<LambdaGrid> {
    LambdaGrid::log_spaced(lambda_start, lambda_end, lambda_count).map_err(err)
}

/// Certifies `x0` against `threat`. `classifier` is either a callable taking a
/// list of rows and returning 0/1 labels, or a synthetic classifier spec.
#[pyfunction]
#[pyo3(signature = (classifier, x0, family, threat, n1=10_000, n2=100_000, alpha=0.001, seed=0,
                    input_id="x0", lambda_start=1e-2, lambda_end=1e4, lambda_count=200))]
#[allow(clippy::too_many_arguments)]
fn certify<'py>(
    py: Python<'py>,
    classifier: &Bound<'py, PyAny>,
    x0: Vec<f64>,
    family: &PyFamily,
    threat: &PyThreat,
    n1: usize,
    n2: usize,
    alpha: f64,
    seed: u64,
    input_id: &str,
    lambda_start: f64,
    lambda_end: f64,
    lambda_count: usize,
) -> PyResult<Bound<'py, PyAny>> {
    let mut c = AnyClassifier::from_py(classifier)?;
    let g = grid(lambda_start, lambda_end, lambda_count)?;
    let budget = ConfidenceBudget::split_evenly(alpha).map_err(err)?;
    let (f, t) = (family.inner, threat.inner);
    let cert = py
        .detach(|| {
            certify_impl(input_id, &mut c, &x0, &f, &t, &g, SampleCounts { n1, n2 }, &budget, &RandomStream::new(seed, 0))
        })
        .map_err(err)?;
    to_py(py, &cert)
}

/// Bisection for the largest certified radius up to `threat.radius`.
#[pyfunction]
#[pyo3(signature = (classifier, x0, family, threat, n1=10_000, n2=100_000, alpha=0.001, iterations=20, seed=0,
                    input_id="x0", lambda_start=1e-2, lambda_end=1e4, lambda_count=200))]
#[allow(clippy::too_many_arguments)]
fn certify_radius<'py>(
    py: Python<'py>,
    classifier: &Bound<'py, PyAny>,
    x0: Vec<f64>,
    family: &PyFamily,
    threat: &PyThreat,
    n1: usize,
    n2: usize,
    alpha: f64,
    iterations: usize,
    seed: u64,
    input_id: &str,
    lambda_start: f64,
    lambda_end: f64,
    lambda_count: usize,
) -> PyResult<Bound<'py, PyAny>> {
    let mut c = AnyClassifier::from_py(classifier)?;
    let g = grid(lambda_start, lambda_end, lambda_count)?;
    let budget = ConfidenceBudget::split_evenly(alpha).map_err(err)?;
    let (f, t) = (family.inner, threat.inner);
    let rep = py
        .detach(|| {
            certify_radius_impl(
                input_id,
                &mut c,
                &x0,
                &f,
                &t,
                &g,
                SampleCounts { n1, n2 },
                &budget,
                iterations,
                &RandomStream::new(seed, 0),
            )
        })
        .map_err(err)?;
    to_py(py, &rep)
}

/// The shift at which the discrepancy is largest over the threat ball.
#[pyfunction(name = "worst_delta")]
fn worst_delta_py<'py>(py: Python<'py>, family: &PyFamily, threat: &PyThreat) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &worst_delta(&threat.inner, &family.inner).map_err(err)?)
}

/// Monte Carlo discrepancy estimates at each λ from one shared set of `n` draws.
/// `alpha` is the per-λ Hoeffding level.
#[pyfunction]
#[pyo3(signature = (family, delta, lambdas, n=100_000, alpha=0.001, seed=0))]
fn discrepancy<'py>(
    py: Python<'py>,
    family: &PyFamily,
    delta: Vec<f64>,
    lambdas: Vec<f64>,
    n: usize,
    alpha: f64,
    seed: u64,
) -> PyResult<Bound<'py, PyAny>> {
    let f = family.inner;
    let est = py
        .detach(|| {
            let s = RatioSample::draw(&f, &delta, n, &RandomStream::new(seed, 0))?;
            lambdas.iter().map(|l| s.estimate(*l, alpha)).collect::<dualcert::Result<Vec<_>>>()
        })
        .map_err(err)?;
    to_py(py, &est)
}

/// Exact smoothed value of an ℓ2 ball indicator at `x0 + shift`.
#[pyfunction]
fn exact_value(classifier: &Bound<'_, PyAny>, x0: Vec<f64>, family: &PyFamily, shift: Vec<f64>) -> PyResult<f64> {
    let c: SyntheticClassifier = from_py(classifier)?;
    Ok(exact_smoothed_value(&c, &x0, &family.inner, &shift).map_err(err)?.value())
}

#[pyfunction]
fn clopper_pearson(successes: u64, trials: u64, alpha: f64) -> PyResult<f64> {
    let ev = BinomialEvidence::new(successes, trials).map_err(err)?;
    Ok(clopper_pearson_lower(ev, alpha).map_err(err)?.value())
}

fn radius_dict<'py>(py: Python<'py>, r: RadiusOutcome) -> PyResult<Bound<'py, PyAny>> {
    let d = PyDict::new(py);
    d.set_item("radius", r.radius)?;
    d.set_item("certifiable", r.certifiable)?;
    Ok(d.into_any())
}

#[pyfunction(name = "cohen_bound")]
fn cohen_bound_py(p0: f64, sigma: f64, r: f64) -> PyResult<f64> {
    Ok(cohen_bound(p0, sigma, r).map_err(err)?.value)
}

#[pyfunction(name = "cohen_radius")]
fn cohen_radius_py(py: Python<'_>, p0: f64, sigma: f64) -> PyResult<Bound<'_, PyAny>> {
    radius_dict(py, cohen_radius(p0, sigma).map_err(err)?)
}

#[pyfunction(name = "teng_bound")]
fn teng_bound_py(p0: f64, b: f64, r: f64) -> PyResult<f64> {
    Ok(teng_bound(p0, b, r).map_err(err)?.value)
}

#[pyfunction(name = "teng_radius")]
fn teng_radius_py(py: Python<'_>, p0: f64, b: f64) -> PyResult<Bound<'_, PyAny>> {
    radius_dict(py, teng_radius(p0, b).map_err(err)?)
}

#[pyfunction(name = "bilateral_radius")]
fn bilateral_radius_py(py: Python<'_>, p_a: f64, p_b: f64, sigma: f64) -> PyResult<Bound<'_, PyAny>> {
    radius_dict(py, gaussian_bilateral_radius(p_a, p_b, sigma).map_err(err)?)
}

#[pymodule]
fn dualcert_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", dualcert::ENGINE_VERSION)?;
    m.add_class::<PyFamily>()?;
    m.add_class::<PyThreat>()?;
    m.add_function(wrap_pyfunction!(certify, m)?)?;
    m.add_function(wrap_pyfunction!(certify_radius, m)?)?;
    m.add_function(wrap_pyfunction!(worst_delta_py, m)?)?;
    m.add_function(wrap_pyfunction!(discrepancy, m)?)?;
    m.add_function(wrap_pyfunction!(exact_value, m)?)?;
    m.add_function(wrap_pyfunction!(clopper_pearson, m)?)?;
    m.add_function(wrap_pyfunction!(cohen_bound_py, m)?)?;
    m.add_function(wrap_pyfunction!(cohen_radius_py, m)?)?;
    m.add_function(wrap_pyfunction!(teng_bound_py, m)?)?;
    m.add_function(wrap_pyfunction!(teng_radius_py, m)?)?;
    m.add_function(wrap_pyfunction!(bilateral_radius_py, m)?)?;
    Ok(())
}
