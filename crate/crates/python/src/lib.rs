//! Python module `_upcross`: bindings over the simulation library.
//!
//! The wrappers stay thin: every operation delegates to the core crate and
//! converts errors to ValueError (OSError for I/O). Paths are seeded exactly
//! like the CLI, through (master_seed, domain, index) streams, so Python
//! sessions reproduce Rust runs bit for bit.

use pyo3::exceptions::{PyOSError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyBytes, PyDict};
use upcross_core::config::Mode;
use upcross_core::deviation::{self, DeviationStatistics, LocalTimeProxy};
use upcross_core::experiments;
use upcross_core::rng::{stream, DOMAIN_PATHS};
use upcross_core::{
    pvar_field, pvar_sequence, sup_pvar_over_time, CrossingSkeleton, ExitTimeLaw,
    ExperimentConfig, UpcrossingField,
};

fn err(e: upcross_core::Error) -> PyErr {
    match e {
        upcross_core::Error::Io(io) => PyOSError::new_err(io.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn parse_mode(mode: &str) -> PyResult<Mode> {
    Mode::parse(mode).map_err(err)
}

/// First-exit-time law of Brownian motion from [-h, h].
#[pyclass(name = "ExitTimeLaw", frozen)]
struct PyExitTimeLaw {
    inner: ExitTimeLaw,
}

#[pymethods]
impl PyExitTimeLaw {
    #[new]
    fn new() -> Self {
        PyExitTimeLaw { inner: ExitTimeLaw::default() }
    }

    fn cdf(&self, t: f64) -> PyResult<f64> {
        self.inner.cdf(t).map_err(err)
    }

    fn pdf(&self, t: f64) -> PyResult<f64> {
        self.inner.pdf(t).map_err(err)
    }

    fn quantile(&self, u: f64) -> PyResult<f64> {
        self.inner.quantile(u).map_err(err)
    }

    /// n exit times from [-h, h] drawn from the (seed, index) stream.
    #[pyo3(signature = (n, seed, h = 1.0, index = 0))]
    fn sample(&self, n: u64, seed: u64, h: f64, index: u64) -> PyResult<Vec<f64>> {
        let mut rng = stream(seed, DOMAIN_PATHS, index);
        (0..n).map(|_| self.inner.sample_exit_time(&mut rng, h).map_err(err)).collect()
    }

    /// Moment and dual-series checks; returns a dict with a "pass" key.
    fn selftest<'py>(&self, py: Python<'py>, n: u64, seed: u64) -> PyResult<Bound<'py, PyDict>> {
        let r = self.inner.selftest(n, seed).map_err(err)?;
        let d = PyDict::new(py);
        d.set_item("n", r.n)?;
        d.set_item("mean", r.mean)?;
        d.set_item("mean_error", r.mean_error)?;
        d.set_item("mean_tolerance", r.mean_tolerance)?;
        d.set_item("second_moment", r.second_moment)?;
        d.set_item("second_moment_error", r.second_moment_error)?;
        d.set_item("second_moment_tolerance", r.second_moment_tolerance)?;
        d.set_item("series_gap", r.series_gap)?;
        d.set_item("series_tolerance", r.series_tolerance)?;
        d.set_item("pass", r.pass)?;
        Ok(d)
    }
}

/// Embedded dyadic random walk: crossing times, step signs, walk values.
#[pyclass(name = "CrossingSkeleton", frozen)]
struct PySkeleton {
    inner: CrossingSkeleton,
}

#[pymethods]
impl PySkeleton {
    /// Simulate one path at the given level from the (seed, index) stream.
    #[staticmethod]
    #[pyo3(signature = (level, horizon, seed, index = 0, start = 0.0, mode = "exact"))]
    fn generate(
        level: u32,
        horizon: f64,
        seed: u64,
        index: u64,
        start: f64,
        mode: &str,
    ) -> PyResult<Self> {
        let mut rng = stream(seed, DOMAIN_PATHS, index);
        let law = ExitTimeLaw::default();
        let inner =
            CrossingSkeleton::generate(&mut rng, &law, level, start, horizon, parse_mode(mode)?)
                .map_err(err)?;
        Ok(PySkeleton { inner })
    }

    /// Rebuild a path from raw parts (times strictly increasing, signs +-1).
    #[staticmethod]
    fn from_parts(
        level: u32,
        start_scaled: i64,
        times: Vec<f64>,
        signs: Vec<i8>,
        horizon: f64,
    ) -> PyResult<Self> {
        Ok(PySkeleton {
            inner: CrossingSkeleton::from_parts(level, start_scaled, times, signs, horizon)
                .map_err(err)?,
        })
    }

    #[getter]
    fn level(&self) -> u32 {
        self.inner.level()
    }

    #[getter]
    fn spacing(&self) -> f64 {
        self.inner.spacing()
    }

    #[getter]
    fn horizon(&self) -> f64 {
        self.inner.horizon()
    }

    #[getter]
    fn start_value(&self) -> f64 {
        self.inner.start_value()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn times(&self) -> Vec<f64> {
        self.inner.times().to_vec()
    }

    fn signs(&self) -> Vec<i8> {
        self.inner.signs().to_vec()
    }

    fn values_scaled(&self) -> Vec<i64> {
        self.inner.values_scaled().to_vec()
    }

    fn durations(&self) -> Vec<f64> {
        self.inner.durations()
    }

    fn walk_value_at(&self, t: f64) -> PyResult<f64> {
        self.inner.walk_value_at(t).map_err(err)
    }

    fn step_count_at(&self, t: f64) -> PyResult<usize> {
        self.inner.step_count_at(t).map_err(err)
    }

    /// Same path viewed on the coarser level-k grid.
    fn coarsen(&self, k: u32) -> PyResult<Self> {
        Ok(PySkeleton { inner: self.inner.coarsen(k).map_err(err)? })
    }

    /// Path restarted after its first n steps.
    fn shift_tail(&self, n: usize) -> PyResult<Self> {
        Ok(PySkeleton { inner: self.inner.shift_tail(n).map_err(err)? })
    }

    fn dump<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyBytes>> {
        let mut buf = Vec::new();
        self.inner.dump(&mut buf).map_err(err)?;
        Ok(PyBytes::new(py, &buf))
    }

    #[staticmethod]
    fn load(data: &[u8]) -> PyResult<Self> {
        Ok(PySkeleton { inner: CrossingSkeleton::load(&mut &data[..]).map_err(err)? })
    }

    fn __repr__(&self) -> String {
        format!(
            "CrossingSkeleton(level={}, steps={}, horizon={})",
            self.inner.level(),
            self.inner.len(),
            self.inner.horizon()
        )
    }
}

/// Completed-upcrossing counts per dyadic cell with their completion times.
#[pyclass(name = "UpcrossingField", frozen)]
struct PyField {
    inner: UpcrossingField,
}

#[pymethods]
impl PyField {
    #[staticmethod]
    fn build(skeleton: &PySkeleton) -> Self {
        PyField { inner: UpcrossingField::build(&skeleton.inner) }
    }

    #[getter]
    fn level(&self) -> u32 {
        self.inner.level()
    }

    #[getter]
    fn horizon(&self) -> f64 {
        self.inner.horizon()
    }

    #[getter]
    fn total_upcrossings(&self) -> u64 {
        self.inner.total_upcrossings()
    }

    fn cell_range(&self) -> Option<(i64, i64)> {
        self.inner.cell_range()
    }

    fn cell_times(&self, j: i64) -> Vec<f64> {
        self.inner.cell_times(j).to_vec()
    }

    fn upcrossings_before(&self, j: i64, t: f64) -> PyResult<u64> {
        self.inner.upcrossings_before(j, t).map_err(err)
    }

    /// U(t, x) = 2 * 2^{-level} * completed upcrossings of x's cell by t.
    fn u_value(&self, t: f64, x: f64) -> PyResult<f64> {
        self.inner.u_value(t, x).map_err(err)
    }

    fn dump<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyBytes>> {
        let mut buf = Vec::new();
        self.inner.dump(&mut buf).map_err(err)?;
        Ok(PyBytes::new(py, &buf))
    }

    #[staticmethod]
    fn load(data: &[u8]) -> PyResult<Self> {
        Ok(PyField { inner: UpcrossingField::load(&mut &data[..]).map_err(err)? })
    }

    fn __eq__(&self, other: &Self) -> bool {
        self.inner == other.inner
    }

    fn __repr__(&self) -> String {
        format!(
            "UpcrossingField(level={}, upcrossings={})",
            self.inner.level(),
            self.inner.total_upcrossings()
        )
    }
}

/// Local-time proxy: the estimator read off a finer reference field.
#[pyclass(name = "LocalTimeProxy", frozen)]
struct PyProxy {
    inner: LocalTimeProxy,
}

#[pymethods]
impl PyProxy {
    #[staticmethod]
    fn build(field: &PyField) -> Self {
        PyProxy { inner: LocalTimeProxy::build(field.inner.clone()) }
    }

    #[getter]
    fn reference_level(&self) -> u32 {
        self.inner.reference_level()
    }

    fn ell_hat(&self, t: f64, x: f64) -> PyResult<f64> {
        self.inner.ell_hat(t, x).map_err(err)
    }

    fn ell_star(&self, t: f64) -> PyResult<f64> {
        self.inner.ell_star(t).map_err(err)
    }
}

/// Sup-deviation statistics of a coarse field against a proxy.
#[pyclass(name = "DeviationStatistics", frozen)]
struct PyDeviation {
    inner: DeviationStatistics,
}

#[pymethods]
impl PyDeviation {
    #[getter]
    fn level(&self) -> u32 {
        self.inner.level
    }

    #[getter]
    fn horizon(&self) -> f64 {
        self.inner.horizon
    }

    #[getter]
    fn sup_deviation(&self) -> f64 {
        self.inner.sup_deviation
    }

    #[getter]
    fn normalizer(&self) -> f64 {
        self.inner.normalizer
    }

    #[getter]
    fn rate(&self) -> f64 {
        self.inner.rate
    }

    #[getter]
    fn centered(&self) -> f64 {
        self.inner.centered
    }

    #[getter]
    fn f_statistic(&self) -> f64 {
        self.inner.f_statistic
    }

    #[getter]
    fn ell_star(&self) -> f64 {
        self.inner.ell_star
    }

    /// Same raw statistics under a different normalizer log base.
    fn renormalized(&self, log_base: f64) -> Self {
        PyDeviation { inner: self.inner.renormalized(log_base) }
    }

    fn __repr__(&self) -> String {
        format!(
            "DeviationStatistics(level={}, horizon={}, rate={:.6})",
            self.inner.level, self.inner.horizon, self.inner.rate
        )
    }
}

/// j such that (j-1)2^{-k} < x <= j 2^{-k}.
#[pyfunction]
fn level_index(x: f64, k: u32) -> i64 {
    upcross_core::level_index(x, k)
}

/// nu_k = sqrt(2^{-k} k ln 2), the almost-sure deviation rate.
#[pyfunction]
#[pyo3(signature = (k, log_base = None))]
fn normalizer(k: u32, log_base: Option<f64>) -> f64 {
    match log_base {
        None => deviation::normalizer(k),
        Some(b) => deviation::normalizer_with_log_base(k, b),
    }
}

/// Sup over space and time <= horizon of the coarse-vs-proxy deviation.
#[pyfunction(name = "sup_deviation")]
fn sup_deviation_py(coarse: &PyField, proxy: &PyProxy, horizon: f64) -> PyResult<PyDeviation> {
    Ok(PyDeviation {
        inner: deviation::sup_deviation(&coarse.inner, &proxy.inner, horizon).map_err(err)?,
    })
}

/// Exact pathwise square-root subadditivity check at level k up to t.
#[pyfunction(name = "subadditivity_check")]
fn subadditivity_check_py<'py>(
    py: Python<'py>,
    fine: &PySkeleton,
    k: u32,
    t: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let r = deviation::subadditivity_check(&fine.inner, k, t).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("tested", r.tested)?;
    d.set_item("violations", r.violations)?;
    d.set_item("identity_failures", r.identity_failures)?;
    d.set_item("squared_violations", r.squared_violations)?;
    d.set_item("max_excess", r.max_excess)?;
    Ok(d)
}

/// Maximal sum of |increments|^q over subsequences; returns
/// (value, chosen indices, analyzed sequence).
#[pyfunction(name = "pvar_sequence")]
fn pvar_sequence_py(values: Vec<f64>, q: f64) -> PyResult<(f64, Vec<usize>, Vec<f64>)> {
    let r = pvar_sequence(&values, q).map_err(err)?;
    Ok((r.value, r.indices, r.values))
}

/// q-variation of the field's spatial profile at time t over [-m, m].
#[pyfunction(name = "pvar_field")]
fn pvar_field_py(
    field: &PyField,
    t: f64,
    q: f64,
    m: u32,
) -> PyResult<(f64, Vec<usize>, Vec<f64>)> {
    let r = pvar_field(&field.inner, t, q, m).map_err(err)?;
    Ok((r.value, r.indices, r.values))
}

/// sup over t <= horizon of the spatial q-variation.
#[pyfunction(name = "sup_pvar_over_time")]
fn sup_pvar_over_time_py(field: &PyField, q: f64, m: u32, horizon: f64) -> PyResult<f64> {
    sup_pvar_over_time(&field.inner, q, m, horizon).map_err(err)
}

fn option_to_string(key: &str, value: &Bound<'_, PyAny>) -> PyResult<String> {
    if let Ok(s) = value.extract::<String>() {
        return Ok(s);
    }
    if let Ok(b) = value.extract::<bool>() {
        return Ok(b.to_string());
    }
    if let Ok(i) = value.extract::<i64>() {
        return Ok(i.to_string());
    }
    if let Ok(f) = value.extract::<f64>() {
        return Ok(format!("{f}"));
    }
    if let Ok(seq) = value.extract::<Vec<f64>>() {
        return Ok(seq.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(","));
    }
    Err(PyValueError::new_err(format!(
        "option '{key}': expected str, number, or sequence of numbers"
    )))
}

/// Run one named experiment (same names as the CLI subcommands) with
/// config overrides; returns {"passed", "csv", "json"}.
#[pyfunction]
#[pyo3(signature = (name, options = None))]
fn run_experiment<'py>(
    py: Python<'py>,
    name: &str,
    options: Option<&Bound<'py, PyDict>>,
) -> PyResult<Bound<'py, PyDict>> {
    let mut config = ExperimentConfig::default();
    if let Some(opts) = options {
        for (key, value) in opts.iter() {
            let key: String = key.extract()?;
            let value = option_to_string(&key, &value)?;
            config.set(&key, &value).map_err(err)?;
        }
    }
    let report = match name {
        "selftest-exit-law" => experiments::run_exit_law_selftest(&config),
        "selftest" => experiments::run_selftest(&config),
        "sup-rate" => experiments::run_sup_rate(&config),
        "lp-rate" => experiments::run_lp_rate(&config),
        "variation" => experiments::run_variation(&config),
        "scaling-test" => experiments::run_scaling_test(&config),
        "subadditivity" => experiments::run_subadditivity(&config),
        other => {
            return Err(PyValueError::new_err(format!("unknown experiment '{other}'")));
        }
    }
    .map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("passed", report.passed())?;
    d.set_item("csv", report.to_csv())?;
    d.set_item("json", report.to_json().map_err(err)?)?;
    Ok(d)
}

#[pymodule]
fn _upcross(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyExitTimeLaw>()?;
    m.add_class::<PySkeleton>()?;
    m.add_class::<PyField>()?;
    m.add_class::<PyProxy>()?;
    m.add_class::<PyDeviation>()?;
    m.add_function(wrap_pyfunction!(level_index, m)?)?;
    m.add_function(wrap_pyfunction!(normalizer, m)?)?;
    m.add_function(wrap_pyfunction!(sup_deviation_py, m)?)?;
    m.add_function(wrap_pyfunction!(subadditivity_check_py, m)?)?;
    m.add_function(wrap_pyfunction!(pvar_sequence_py, m)?)?;
    m.add_function(wrap_pyfunction!(pvar_field_py, m)?)?;
    m.add_function(wrap_pyfunction!(sup_pvar_over_time_py, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
