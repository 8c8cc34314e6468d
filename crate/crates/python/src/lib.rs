//! Python bindings. Structured results cross the boundary as plain dicts
//! (through `json`), so they match the artifacts written to disk.

use std::path::PathBuf;

use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;
use serde::Serialize;

use subway_ems::assess::Metric;
use subway_ems::calibrate;
use subway_ems::config::{ExperimentConfig, Scale};
use subway_ems::model::{self as core_model, Control, NoiseVector, State, StationModel};
use subway_ems::pipeline::{self as core_pipeline, PolicyKind};
use subway_ems::scenarios::GeneratorProfile;
use subway_ems::EmsError;

create_exception!(subway_ems, SubwayEmsError, PyException);

fn err(e: EmsError) -> PyErr {
    SubwayEmsError::new_err(e.to_string())
}

fn to_py<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| SubwayEmsError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn policy(name: &str) -> PyResult<PolicyKind> {
    name.parse().map_err(err)
}

/// Experiment configuration.
#[pyclass(name = "Config", module = "subway_ems", from_py_object)]
#[derive(Clone)]
struct PyConfig {
    inner: ExperimentConfig,
}

#[pymethods]
impl PyConfig {
    /// The bundled desk-scale experiment.
    #[new]
    fn new() -> Self {
        Self { inner: ExperimentConfig::desk() }
    }

    /// TOML (`.toml`) or JSON file.
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self { inner: ExperimentConfig::load(&path).map_err(err)? })
    }

    fn with_seed(&self, seed: u64) -> Self {
        Self { inner: self.inner.clone().with_seed(seed) }
    }

    /// `"desk"` or `"paper"`.
    fn with_scale(&self, scale: &str) -> PyResult<Self> {
        let scale: Scale = scale.parse().map_err(err)?;
        Ok(Self { inner: self.inner.clone().with_scale(scale) })
    }

    /// Sets scenario counts directly.
    fn with_counts(&self, optimization: usize, assessment: usize) -> PyResult<Self> {
        let mut inner = self.inner.clone();
        inner.scenarios.optimization_count = optimization;
        inner.scenarios.assessment_count = assessment;
        inner.validate().map_err(err)?;
        Ok(Self { inner })
    }

    fn hash(&self) -> String {
        self.inner.hash()
    }

    fn to_toml(&self) -> PyResult<String> {
        self.inner.to_toml().map_err(err)
    }

    fn to_dict<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner)
    }

    #[getter]
    fn model(&self) -> PyModel {
        PyModel { inner: self.inner.model.clone() }
    }

    #[getter]
    fn output_dir(&self) -> PathBuf {
        self.inner.output_dir.clone()
    }

    #[setter]
    fn set_output_dir(&mut self, dir: PathBuf) {
        self.inner.output_dir = dir;
    }
}

/// Station model: battery, ventilation, PM10 and cost parameters.
#[pyclass(name = "Model", module = "subway_ems", skip_from_py_object)]
#[derive(Clone)]
struct PyModel {
    inner: StationModel,
}

#[pymethods]
impl PyModel {
    #[new]
    fn new() -> Self {
        Self { inner: StationModel::default() }
    }

    #[getter]
    fn horizon(&self) -> usize {
        self.inner.horizon()
    }

    #[getter]
    fn delta_hours(&self) -> f64 {
        self.inner.time.delta_hours
    }

    /// Ventilation power (kW) of a mode.
    fn ventilation_power(&self, high: bool) -> f64 {
        if high {
            self.inner.ventilation.power_high
        } else {
            self.inner.ventilation.power_low
        }
    }

    /// One step from `(soc, pm10)` under `(u_b, high)` and `w_{t+1}`.
    /// Returns `(soc, pm10, stage_cost, stable)`.
    #[pyo3(signature = (t, soc, pm10, u_b, high, d, b, n, c_o))]
    #[allow(clippy::too_many_arguments)]
    fn step(
        &self,
        t: usize,
        soc: f64,
        pm10: f64,
        u_b: f64,
        high: bool,
        d: f64,
        b: f64,
        n: f64,
        c_o: f64,
    ) -> PyResult<(f64, f64, f64, bool)> {
        let m = &self.inner;
        if t >= m.horizon() {
            return Err(SubwayEmsError::new_err(format!("t = {t} is past the horizon {}", m.horizon())));
        }
        let x = State::new(soc, pm10);
        let u_v = self.ventilation_power(high);
        let u = Control::new(u_b, u_v);
        let w = NoiseVector::new(d, b, n, c_o);
        let next = core_model::dynamics(m, t, &x, &u, &w);
        let cost = core_model::stage_cost(m, t, &x, &u, &w, &next.state);
        Ok((next.state.soc, next.state.pm10, cost, next.stable))
    }

    /// Mean/max PM10, energy and bill of the nominal day under the
    /// reference operation.
    fn reference_stats<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        let profiles = GeneratorProfile::default().deterministic(&self.inner.time);
        let stats = calibrate::reference_stats(&self.inner, &profiles).map_err(err)?;
        to_py(py, &stats)
    }

    fn to_dict<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner)
    }
}

/// Staged experiment in one output directory.
#[pyclass(name = "Pipeline", module = "subway_ems")]
struct PyPipeline {
    inner: core_pipeline::Pipeline,
}

#[pymethods]
impl PyPipeline {
    #[new]
    #[pyo3(signature = (config=None, out=None))]
    fn new(config: Option<PyConfig>, out: Option<PathBuf>) -> PyResult<Self> {
        let mut cfg = config.map(|c| c.inner).unwrap_or_else(ExperimentConfig::desk);
        if let Some(out) = out {
            cfg.output_dir = out;
        }
        Ok(Self { inner: core_pipeline::Pipeline::new(cfg).map_err(err)? })
    }

    #[getter]
    fn config_hash(&self) -> String {
        self.inner.config_hash().to_string()
    }

    #[getter]
    fn root(&self) -> PathBuf {
        self.inner.root().to_path_buf()
    }

    fn gen_scenarios<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        let r = py.detach(|| self.inner.gen_scenarios()).map_err(err)?;
        to_py(py, &r)
    }

    fn fit_noise<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        let r = py.detach(|| self.inner.fit_noise()).map_err(err)?;
        to_py(py, &r)
    }

    fn calibrate<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        let r = py.detach(|| self.inner.calibrate()).map_err(err)?;
        to_py(py, &r)
    }

    fn offline_sdpo<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        let r = py.detach(|| self.inner.offline_sdpo()).map_err(err)?;
        to_py(py, &r)
    }

    fn offline_sdpa<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        let r = py.detach(|| self.inner.offline_sdpa()).map_err(err)?;
        to_py(py, &r)
    }

    /// Closed-loop trace of one assessment scenario.
    #[pyo3(signature = (policy, scenario=0))]
    fn simulate<'py>(&self, py: Python<'py>, policy: &str, scenario: usize) -> PyResult<Bound<'py, PyAny>> {
        let kind = self::policy(policy)?;
        let r = py.detach(|| self.inner.simulate(kind, scenario)).map_err(err)?;
        to_py(py, &r)
    }

    /// Monte Carlo assessment; `None` assesses mpc, sdpo and sdpa.
    #[pyo3(signature = (policies=None))]
    fn assess<'py>(&self, py: Python<'py>, policies: Option<Vec<String>>) -> PyResult<Bound<'py, PyAny>> {
        let kinds = match policies {
            Some(names) => names.iter().map(|n| policy(n)).collect::<PyResult<Vec<_>>>()?,
            None => PolicyKind::OPTIMIZED.to_vec(),
        };
        let r = py.detach(|| self.inner.assess(&kinds)).map_err(err)?;
        to_py(py, &r)
    }

    /// `metric` is `"total"` or `"money"`.
    #[pyo3(signature = (a, b, metric="total"))]
    fn compare<'py>(&self, py: Python<'py>, a: &str, b: &str, metric: &str) -> PyResult<Bound<'py, PyAny>> {
        let metric = match metric {
            "total" => Metric::TotalCost,
            "money" => Metric::MoneyCost,
            other => return Err(SubwayEmsError::new_err(format!("unknown metric `{other}` (total or money)"))),
        };
        let r = self.inner.compare(policy(a)?, policy(b)?, metric).map_err(err)?;
        to_py(py, &r)
    }

    #[pyo3(signature = (t0=0, horizon=60, scenario=0))]
    fn export_milp<'py>(&self, py: Python<'py>, t0: usize, horizon: usize, scenario: usize) -> PyResult<Bound<'py, PyAny>> {
        let r = self.inner.export_milp(t0, horizon, scenario).map_err(err)?;
        to_py(py, &r)
    }

    fn validate_discretization<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        let r = self.inner.validate_discretization().map_err(err)?;
        to_py(py, &r)
    }

    /// Markdown table of the last assessment.
    fn report(&self) -> PyResult<String> {
        self.inner.report().map_err(err)
    }
}

#[pymodule]
#[pyo3(name = "subway_ems")]
fn subway_ems_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyConfig>()?;
    m.add_class::<PyModel>()?;
    m.add_class::<PyPipeline>()?;
    m.add("SubwayEmsError", m.py().get_type::<SubwayEmsError>())?;
    m.add("POLICIES", ["reference", "sdpo", "sdpa", "mpc"])?;
    Ok(())
}
