use std::collections::HashMap;
use std::sync::Arc;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use rtlab::azema::closed_form_bundle;
use rtlab::lab::{list_experiments as catalog, run, ExperimentConfig};
use rtlab::measure_change::{
    weight as density_weight, Invariance, MeasureChangeSpec, NamedFn, ProfileFn,
};
use rtlab::path_engine::{self as pe, map_collect, RngStream, SamplePath, TimeGrid};
use rtlab::random_times::{detect as detect_time, RandomTimeResult, ScenarioId};
use rtlab::stat_tests::{self as st, Reference, TestReport};
use rtlab::LabError;

fn to_py(e: LabError) -> PyErr {
    match e {
        LabError::Config(_) | LabError::Domain(_) | LabError::Unsupported { .. } => {
            PyValueError::new_err(e.to_string())
        }
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn scenario(s: &str) -> PyResult<ScenarioId> {
    s.parse().map_err(to_py)
}

/// A sampled path on its time grid.
#[pyclass(name = "Path", module = "rtlab", frozen)]
struct PyPath(SamplePath);

#[pymethods]
impl PyPath {
    #[getter]
    fn values(&self) -> Vec<f64> {
        self.0.values().to_vec()
    }

    #[getter]
    fn times(&self) -> Vec<f64> {
        (0..self.0.len()).map(|k| self.0.time(k)).collect()
    }

    #[getter]
    fn absorbed_at(&self) -> Option<usize> {
        self.0.absorbed_at()
    }

    #[getter]
    fn bridge_monitored(&self) -> bool {
        self.0.bridge_monitored()
    }

    /// Recorded zero touches between grid points as `(step index, time)`.
    #[getter]
    fn zero_touches(&self) -> Vec<(usize, f64)> {
        self.0
            .zero_touches()
            .iter()
            .map(|z| (z.index, z.time))
            .collect()
    }

    fn time(&self, k: usize) -> PyResult<f64> {
        self.check(k)?;
        Ok(self.0.time(k))
    }

    fn value_at(&self, t: f64) -> f64 {
        self.0.value_at(t)
    }

    fn max_through(&self, k: usize) -> PyResult<f64> {
        self.check(k)?;
        Ok(self.0.max_through(k))
    }

    fn running_max(&self) -> Vec<f64> {
        self.0.running_max().values().to_vec()
    }

    fn first_hit(&self, level: f64) -> Option<usize> {
        self.0.first_hit(level)
    }

    /// Final value of the crossing-count local time at 0.
    fn local_time_at_zero(&self) -> f64 {
        *self.0.local_time_at_zero().values().last().unwrap_or(&0.0)
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    fn __repr__(&self) -> String {
        format!(
            "Path(len={}, end_time={:.6}, end_value={:.6})",
            self.0.len(),
            self.0.end_time(),
            self.0.values()[self.0.last_index()]
        )
    }
}

impl PyPath {
    fn check(&self, k: usize) -> PyResult<()> {
        if k < self.0.len() {
            Ok(())
        } else {
            Err(PyValueError::new_err(format!(
                "index {k} out of range for path of length {}",
                self.0.len()
            )))
        }
    }
}

/// Step size, post-window and horizon cap for the level-one and absorbed samplers.
#[pyclass(name = "RunConfig", module = "rtlab", frozen)]
struct PyRunConfig(pe::RunConfig);

#[pymethods]
impl PyRunConfig {
    #[new]
    #[pyo3(signature = (dt, window=1.0, horizon_cap=50.0, drift=0.0, exact=false, bridge=true))]
    fn new(
        dt: f64,
        window: f64,
        horizon_cap: f64,
        drift: f64,
        exact: bool,
        bridge: bool,
    ) -> PyResult<Self> {
        let mut c = pe::RunConfig::new(dt, window, horizon_cap).with_drift(drift);
        if exact {
            c = c.exact();
        }
        if !bridge {
            c = c.grid_only();
        }
        c.validate().map_err(to_py)?;
        Ok(PyRunConfig(c))
    }

    fn __repr__(&self) -> String {
        let c = &self.0;
        format!(
            "RunConfig(dt={}, window={}, horizon_cap={}, drift={}, exact={}, bridge={})",
            c.dt, c.window, c.horizon_cap, c.drift, !c.accelerate, c.bridge
        )
    }
}

/// Location of a random time on a path.
#[pyclass(name = "RandomTime", module = "rtlab", frozen)]
struct PyRandomTime(RandomTimeResult);

#[pymethods]
impl PyRandomTime {
    #[getter]
    fn scenario(&self) -> &'static str {
        self.0.scenario.code()
    }

    #[getter]
    fn sigma_index(&self) -> usize {
        self.0.sigma_index
    }

    #[getter]
    fn sigma_time(&self) -> f64 {
        self.0.sigma_time
    }

    #[getter]
    fn censored(&self) -> bool {
        self.0.censored
    }

    #[getter]
    fn aux(&self) -> HashMap<&'static str, usize> {
        self.0.aux.iter().map(|(k, v)| (*k, *v)).collect()
    }

    fn __repr__(&self) -> String {
        format!(
            "RandomTime({}, sigma_index={}, sigma_time={:.6}, censored={})",
            self.0.scenario, self.0.sigma_index, self.0.sigma_time, self.0.censored
        )
    }
}

#[pyfunction]
#[allow(clippy::too_many_arguments)]
#[pyo3(signature = (dt, horizon, seed, index=0, drift=0.0, start=0.0, absorb=false))]
fn sample_bm(
    py: Python<'_>,
    dt: f64,
    horizon: f64,
    seed: u64,
    index: u64,
    drift: f64,
    start: f64,
    absorb: bool,
) -> PyResult<PyPath> {
    let grid = TimeGrid::covering(dt, horizon).map_err(to_py)?;
    Ok(PyPath(py.detach(|| {
        pe::sample_bm(grid, &RngStream::new(seed, index), drift, start, absorb)
    })))
}

#[pyfunction]
#[pyo3(signature = (config, seed, index=0))]
fn sample_to_level_one(
    py: Python<'_>,
    config: &PyRunConfig,
    seed: u64,
    index: u64,
) -> PyResult<PyPath> {
    let c = config.0;
    py.detach(|| pe::sample_to_level_one(&c, &RngStream::new(seed, index)))
        .map(PyPath)
        .map_err(to_py)
}

#[pyfunction]
#[pyo3(signature = (config, seed, index=0))]
fn sample_absorbed(
    py: Python<'_>,
    config: &PyRunConfig,
    seed: u64,
    index: u64,
) -> PyResult<PyPath> {
    let c = config.0;
    py.detach(|| pe::sample_absorbed(&c, &RngStream::new(seed, index)))
        .map(PyPath)
        .map_err(to_py)
}

#[pyfunction]
fn detect(scenario_id: &str, path: &PyPath) -> PyResult<PyRandomTime> {
    detect_time(scenario(scenario_id)?, &path.0)
        .map(PyRandomTime)
        .map_err(to_py)
}

/// Samples `n_paths` paths of a scenario's driving law and returns σ in time
/// units, `None` for censored paths.
#[pyfunction]
#[pyo3(signature = (scenario_id, n_paths, seed, dt=1e-3, horizon_cap=50.0))]
fn sigma_times(
    py: Python<'_>,
    scenario_id: &str,
    n_paths: usize,
    seed: u64,
    dt: f64,
    horizon_cap: f64,
) -> PyResult<Vec<Option<f64>>> {
    use ScenarioId::*;
    let s = scenario(scenario_id)?;
    let base = pe::RunConfig::new(dt, 1.0, horizon_cap);
    let cfg = if s == S5ScaleDrift {
        base.with_drift(rtlab::azema::DEFAULT_SCALE_DRIFT)
    } else {
        base
    };
    cfg.validate().map_err(to_py)?;
    let unit = TimeGrid::covering(dt, 1.0).map_err(to_py)?;
    let out: Vec<rtlab::Result<Option<f64>>> = py.detach(|| {
        map_collect(n_paths, |i| {
            let stream = RngStream::new(seed, i as u64);
            let path = match s {
                S1ExcursionHonest | S2PiPseudo | S5ScaleDrift => {
                    pe::sample_to_level_one(&cfg, &stream)?
                }
                S3StoppedMaxHonest | S4Invariance => pe::sample_absorbed(&cfg, &stream)?,
                S6HalfBridge | S7LastZeroUnit => pe::sample_bm(unit, &stream, 0.0, 0.0, false),
            };
            let tr = detect_time(s, &path)?;
            Ok((!tr.censored).then_some(tr.sigma_time))
        })
    });
    out.into_iter().collect::<rtlab::Result<_>>().map_err(to_py)
}

/// `Z`, `A`, `m`, `N`, `D` along the path as a dict of lists.
#[pyfunction]
fn azema_bundle<'py>(
    py: Python<'py>,
    path: &PyPath,
    time: &PyRandomTime,
) -> PyResult<Bound<'py, PyDict>> {
    let b = closed_form_bundle(time.0.scenario, &path.0, &time.0).map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("z", b.z)?;
    d.set_item("a", b.a)?;
    d.set_item("m", b.m)?;
    d.set_item("n", b.n)?;
    d.set_item("d", b.d)?;
    Ok(d)
}

fn profile(f: Option<&Bound<'_, PyAny>>) -> PyResult<ProfileFn> {
    let Some(f) = f else {
        return Ok(ProfileFn::Named(NamedFn::One));
    };
    if let Ok(name) = f.extract::<String>() {
        return Ok(ProfileFn::Named(name.parse().map_err(to_py)?));
    }
    if !f.is_callable() {
        return Err(PyValueError::new_err(
            "profile must be a function name or a callable",
        ));
    }
    let name = f
        .getattr("__name__")
        .and_then(|n| n.extract::<String>())
        .unwrap_or_else(|_| "callable".into());
    let f: Py<PyAny> = f.clone().unbind();
    // a raising callable evaluates to NaN, which the normalization check rejects
    Ok(ProfileFn::custom(name, move |x| {
        Python::attach(|py| {
            f.call1(py, (x,))
                .and_then(|v| v.extract::<f64>(py))
                .unwrap_or(f64::NAN)
        })
    }))
}

fn spec(name: &str, f: Option<&Bound<'_, PyAny>>) -> PyResult<MeasureChangeSpec> {
    let s = match name.trim().to_ascii_lowercase().as_str() {
        "f_of_a_pseudo" => MeasureChangeSpec::FOfAPseudo(profile(f)?),
        "m_sigma" => MeasureChangeSpec::MSigma,
        "f_of_a_honest" => MeasureChangeSpec::FOfAHonest(profile(f)?),
        "generalized_pi" => MeasureChangeSpec::GeneralizedPi(profile(f)?),
        "two_z_sigma" => MeasureChangeSpec::TwoZSigma,
        "log_nbar" => MeasureChangeSpec::LogNbar,
        "stoch_exp_x_minus_c" => {
            MeasureChangeSpec::StochExpG(Arc::new(Invariance::x_minus_c().map_err(to_py)?))
        }
        "abs_b1" => MeasureChangeSpec::AbsB1,
        other => return Err(PyValueError::new_err(format!("unknown density '{other}'"))),
    };
    s.checked().map_err(to_py)
}

/// Density `ρ` of a measure change evaluated on one path. `profile` is a
/// named function ("one", "two_x", "x", "two_exp_neg") or a Python callable.
#[pyfunction]
#[pyo3(signature = (density, path, time, profile=None))]
fn weight(
    density: &str,
    path: &PyPath,
    time: &PyRandomTime,
    profile: Option<&Bound<'_, PyAny>>,
) -> PyResult<f64> {
    let s = spec(density, profile)?;
    density_weight(&s, time.0.scenario, &path.0, &time.0).map_err(to_py)
}

fn report_dict<'py>(py: Python<'py>, r: &TestReport) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("name", &r.name)?;
    d.set_item("statistic", r.statistic)?;
    d.set_item("se", r.se)?;
    d.set_item("threshold", r.threshold)?;
    d.set_item("n_effective", r.n_effective)?;
    d.set_item("pass", r.pass)?;
    Ok(d)
}

#[pyfunction]
#[pyo3(signature = (samples, reference, weights=None, threshold=st::KS_THRESHOLD))]
fn weighted_ks<'py>(
    py: Python<'py>,
    samples: Vec<f64>,
    reference: &str,
    weights: Option<Vec<f64>>,
    threshold: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let reference = match reference {
        "uniform01" => Reference::Uniform01,
        "exp1" => Reference::Exp1,
        "density_2x" => Reference::Density2x,
        other => {
            return Err(PyValueError::new_err(format!(
                "unknown reference law '{other}'"
            )))
        }
    };
    let r = st::weighted_ks(&samples, weights.as_deref(), reference, threshold).map_err(to_py)?;
    report_dict(py, &r)
}

/// Weighted mean as `(mean, se, n_effective)`.
#[pyfunction]
#[pyo3(signature = (samples, weights=None))]
fn weighted_mean(samples: Vec<f64>, weights: Option<Vec<f64>>) -> PyResult<(f64, f64, f64)> {
    let m = st::weighted_mean(&samples, weights.as_deref()).map_err(to_py)?;
    Ok((m.mean, m.se, m.n_effective))
}

#[pyfunction]
fn effective_sample_size(weights: Vec<f64>) -> f64 {
    st::effective_sample_size(&weights)
}

fn json_loads<'py>(py: Python<'py>, text: &str) -> PyResult<Bound<'py, PyAny>> {
    py.import("json")?.call_method1("loads", (text,))
}

/// The experiment catalog as a list of dicts.
#[pyfunction]
fn list_experiments(py: Python<'_>) -> PyResult<Bound<'_, PyAny>> {
    let text =
        serde_json::to_string(&catalog()).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    json_loads(py, &text)
}

/// Runs one experiment and returns its artifact as a dict. `overrides` takes
/// the same keys as the CLI config file.
#[pyfunction]
#[pyo3(signature = (experiment, n_paths=None, seed=None, dt=None, overrides=None))]
fn run_experiment<'py>(
    py: Python<'py>,
    experiment: &str,
    n_paths: Option<usize>,
    seed: Option<u64>,
    dt: Option<f64>,
    overrides: Option<HashMap<String, String>>,
) -> PyResult<Bound<'py, PyAny>> {
    let mut cfg = ExperimentConfig::new(experiment.parse().map_err(to_py)?);
    let flags = [
        ("n_paths", n_paths.map(|v| v.to_string())),
        ("master_seed", seed.map(|v| v.to_string())),
        ("dt", dt.map(|v| v.to_string())),
    ];
    for (k, v) in flags.into_iter().filter_map(|(k, v)| v.map(|v| (k, v))) {
        cfg.set(k, &v).map_err(to_py)?;
    }
    for (k, v) in overrides.unwrap_or_default() {
        cfg.set(&k, &v).map_err(to_py)?;
    }
    cfg.validate().map_err(to_py)?;
    let artifact = py.detach(|| run(&cfg)).map_err(to_py)?;
    json_loads(py, &artifact.to_json().map_err(to_py)?)
}

#[pymodule]
#[pyo3(name = "rtlab")]
fn rtlab_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyPath>()?;
    m.add_class::<PyRunConfig>()?;
    m.add_class::<PyRandomTime>()?;
    m.add_function(wrap_pyfunction!(sample_bm, m)?)?;
    m.add_function(wrap_pyfunction!(sample_to_level_one, m)?)?;
    m.add_function(wrap_pyfunction!(sample_absorbed, m)?)?;
    m.add_function(wrap_pyfunction!(detect, m)?)?;
    m.add_function(wrap_pyfunction!(sigma_times, m)?)?;
    m.add_function(wrap_pyfunction!(azema_bundle, m)?)?;
    m.add_function(wrap_pyfunction!(weight, m)?)?;
    m.add_function(wrap_pyfunction!(weighted_ks, m)?)?;
    m.add_function(wrap_pyfunction!(weighted_mean, m)?)?;
    m.add_function(wrap_pyfunction!(effective_sample_size, m)?)?;
    m.add_function(wrap_pyfunction!(list_experiments, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
