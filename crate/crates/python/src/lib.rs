//! Python bindings: set algebra, the FTMS plant, and scenario runs.

use std::path::PathBuf;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use shrinkmpc::config::ScenarioConfig;
use shrinkmpc::controller::{Assessment, ControlMode};
use shrinkmpc::ltv::ReferenceTrajectory;
use shrinkmpc::model::ftms::{FtmsModel, FtmsParams};
use shrinkmpc::model::Model;
use shrinkmpc::sets;
use shrinkmpc::sim::{self, ClosedLoopLog, DisturbanceRealization, RealizationKind};
use shrinkmpc::{DMatrix, DVector, Error};

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Config(_) | Error::InvalidArgument(_) | Error::DimensionMismatch { .. } => {
            PyValueError::new_err(e.to_string())
        }
        other => PyRuntimeError::new_err(other.to_string()),
    }
}

fn vec_of(v: &DVector<f64>) -> Vec<f64> {
    v.iter().copied().collect()
}

fn rows_of(vs: &[DVector<f64>]) -> Vec<Vec<f64>> {
    vs.iter().map(vec_of).collect()
}

fn matrix(rows: Vec<Vec<f64>>) -> PyResult<DMatrix<f64>> {
    let n = rows.len();
    let m = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != m) {
        return Err(PyValueError::new_err("matrix rows must have equal length"));
    }
    Ok(DMatrix::from_fn(n, m, |i, j| rows[i][j]))
}

/// Axis-aligned box `{x : lower ≤ x ≤ upper}`.
#[pyclass(name = "Interval", from_py_object)]
#[derive(Clone)]
struct PyInterval(sets::Interval);

#[pymethods]
impl PyInterval {
    #[new]
    fn new(lower: Vec<f64>, upper: Vec<f64>) -> PyResult<Self> {
        sets::Interval::from_slices(&lower, &upper).map(Self).map_err(to_py)
    }

    #[getter]
    fn lower(&self) -> Vec<f64> {
        vec_of(self.0.lower())
    }

    #[getter]
    fn upper(&self) -> Vec<f64> {
        vec_of(self.0.upper())
    }

    fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    fn contains(&self, x: Vec<f64>) -> bool {
        x.len() == self.0.dim() && self.0.contains(&DVector::from_vec(x))
    }

    fn minkowski_sum(&self, other: &PyInterval) -> PyResult<Self> {
        self.0.minkowski_sum(&other.0).map(Self).map_err(to_py)
    }

    /// Pontryagin difference with an origin-centered subtrahend.
    fn pontryagin_diff(&self, other: &PyInterval) -> PyResult<Self> {
        self.0.pontryagin_diff(&other.0).map(Self).map_err(to_py)
    }

    fn to_zonotope(&self) -> PyResult<PyZonotope> {
        self.0.to_zonotope().map(PyZonotope).map_err(to_py)
    }

    fn __repr__(&self) -> String {
        format!("Interval(lower={:?}, upper={:?})", self.lower(), self.upper())
    }
}

/// Zonotope `{c + G ξ : ‖ξ‖∞ ≤ 1}`; generators are the columns of `G`.
#[pyclass(name = "Zonotope", from_py_object)]
#[derive(Clone)]
struct PyZonotope(sets::Zonotope);

#[pymethods]
impl PyZonotope {
    #[new]
    fn new(center: Vec<f64>, generators: Vec<Vec<f64>>) -> PyResult<Self> {
        let g = if generators.is_empty() {
            DMatrix::zeros(center.len(), 0)
        } else {
            matrix(generators)?
        };
        sets::Zonotope::new(DVector::from_vec(center), g).map(Self).map_err(to_py)
    }

    #[getter]
    fn center(&self) -> Vec<f64> {
        vec_of(self.0.center())
    }

    #[getter]
    fn num_generators(&self) -> usize {
        self.0.num_generators()
    }

    fn support(&self, direction: Vec<f64>) -> PyResult<f64> {
        if direction.len() != self.0.dim() {
            return Err(PyValueError::new_err("direction has the wrong dimension"));
        }
        Ok(self.0.support(&DVector::from_vec(direction)))
    }

    fn minkowski_sum(&self, other: &PyZonotope) -> PyResult<Self> {
        self.0.minkowski_sum(&other.0).map(Self).map_err(to_py)
    }

    fn linear_map(&self, m: Vec<Vec<f64>>) -> PyResult<Self> {
        self.0.linear_map(&matrix(m)?).map(Self).map_err(to_py)
    }

    fn interval_hull(&self) -> PyInterval {
        PyInterval(self.0.interval_hull())
    }
}

/// Forward-Euler fuel thermal management plant.
#[pyclass(name = "FtmsModel")]
struct PyFtmsModel(FtmsModel);

#[pymethods]
impl PyFtmsModel {
    #[new]
    #[pyo3(signature = (sample_time = 100.0))]
    fn new(sample_time: f64) -> PyResult<Self> {
        FtmsModel::new(FtmsParams::default(), sample_time).map(Self).map_err(to_py)
    }

    #[getter]
    fn initial_state(&self) -> Vec<f64> {
        vec_of(&self.0.initial_state())
    }

    fn step(&self, x: Vec<f64>, u: Vec<f64>, d: f64) -> PyResult<Vec<f64>> {
        self.0
            .step(&DVector::from_vec(x), &DVector::from_vec(u), &DVector::from_element(1, d))
            .map(|v| vec_of(&v))
            .map_err(to_py)
    }

    /// `(A, B, V)` at the given point, as nested lists.
    fn jacobians(&self, x: Vec<f64>, u: Vec<f64>, d: f64) -> PyResult<(Vec<Vec<f64>>, Vec<Vec<f64>>, Vec<Vec<f64>>)> {
        let j = self
            .0
            .jacobians(&DVector::from_vec(x), &DVector::from_vec(u), &DVector::from_element(1, d))
            .map_err(to_py)?;
        let rows = |m: &DMatrix<f64>| (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect();
        Ok((rows(&j.a), rows(&j.b), rows(&j.v)))
    }
}

/// Closed-loop trajectories and their digest.
#[pyclass(name = "RunResult", get_all)]
struct PyRunResult {
    mode: String,
    disturbance: String,
    seed: u64,
    states: Vec<Vec<f64>>,
    inputs: Vec<Vec<f64>>,
    disturbance_offsets: Vec<f64>,
    optimized: Vec<bool>,
    violation_steps: usize,
    equalized_objective: f64,
    success_rate: f64,
    contained: Option<bool>,
    tightness: Option<Vec<f64>>,
    failure: Option<String>,
}

impl From<&ClosedLoopLog> for PyRunResult {
    fn from(log: &ClosedLoopLog) -> Self {
        Self {
            mode: log.mode.as_str().into(),
            disturbance: log.realization.kind.as_str().into(),
            seed: log.realization.seed,
            states: rows_of(&log.states),
            inputs: log.records.iter().map(|r| vec_of(&r.input)).collect(),
            disturbance_offsets: log.records.iter().map(|r| r.d_offset[0]).collect(),
            optimized: log
                .records
                .iter()
                .map(|r| r.mode == shrinkmpc::controller::StepMode::Optimized)
                .collect(),
            violation_steps: log.violation_steps,
            equalized_objective: log.equalized_objective,
            success_rate: log.success_rate(),
            contained: log.containment.as_ref().map(|c| c.contained()),
            tightness: log.containment.as_ref().map(|c| c.tightness.clone()),
            failure: log.failure.clone(),
        }
    }
}

/// A validated scenario with its offline initial trajectory.
#[pyclass(name = "Scenario")]
struct PyScenario {
    config: ScenarioConfig,
    scenario: shrinkmpc::config::Scenario,
    initial: (ReferenceTrajectory, Assessment),
}

fn overrides_of(overrides: Option<Vec<(String, String)>>) -> Vec<(String, String)> {
    overrides.unwrap_or_default()
}

impl PyScenario {
    fn from_config(py: Python<'_>, config: ScenarioConfig) -> PyResult<Self> {
        let scenario = config.build().map_err(to_py)?;
        let initial = py.detach(|| scenario.generate_initial()).map_err(to_py)?;
        Ok(Self {
            config,
            scenario,
            initial,
        })
    }

    fn factory(&self, mode: Option<&str>) -> PyResult<sim::ControllerFactory> {
        let mut f = self.scenario.factory(self.initial.clone());
        if let Some(m) = mode {
            f.mode = m.parse::<ControlMode>().map_err(to_py)?;
        }
        Ok(f)
    }
}

#[pymethods]
impl PyScenario {
    /// Default scenario with `key=value` overrides, e.g.
    /// `[("controller.mode", '"nominal"')]`.
    #[new]
    #[pyo3(signature = (overrides = None))]
    fn new(py: Python<'_>, overrides: Option<Vec<(String, String)>>) -> PyResult<Self> {
        let config = ScenarioConfig::from_toml_str("", &overrides_of(overrides)).map_err(to_py)?;
        Self::from_config(py, config)
    }

    #[staticmethod]
    #[pyo3(signature = (path, overrides = None))]
    fn from_file(py: Python<'_>, path: PathBuf, overrides: Option<Vec<(String, String)>>) -> PyResult<Self> {
        let config = ScenarioConfig::load(&path, &overrides_of(overrides)).map_err(to_py)?;
        Self::from_config(py, config)
    }

    #[getter]
    fn horizon(&self) -> usize {
        self.scenario.problem.horizon()
    }

    #[getter]
    fn sample_time(&self) -> f64 {
        self.scenario.sample_time
    }

    /// `(states, inputs)` of the initial trajectory.
    fn initial_trajectory(&self) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        (rows_of(self.initial.0.states()), rows_of(self.initial.0.inputs()))
    }

    /// `(lower, upper)` bounds of the error sets along the initial trajectory.
    fn error_sets(&self) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let e = &self.initial.1.errors.errors;
        (
            e.iter().map(|s| vec_of(s.lower())).collect(),
            e.iter().map(|s| vec_of(s.upper())).collect(),
        )
    }

    /// One closed-loop run; arguments left out use the scenario's values.
    #[pyo3(signature = (mode = None, disturbance = None, seed = None))]
    fn run(&self, py: Python<'_>, mode: Option<&str>, disturbance: Option<&str>, seed: Option<u64>) -> PyResult<PyRunResult> {
        let factory = self.factory(mode)?;
        let mut realization = self.config.realization();
        if let Some(kind) = disturbance {
            realization.kind = kind.parse::<RealizationKind>().map_err(to_py)?;
        }
        if let Some(s) = seed {
            realization.seed = s;
        }
        let ts = self.scenario.sample_time;
        let log = py.detach(|| factory.run(&realization, ts)).map_err(to_py)?;
        Ok(PyRunResult::from(&log))
    }

    /// Seeded uniform runs `base_seed, base_seed + 1, …`.
    #[pyo3(signature = (runs, base_seed = 1, mode = None))]
    fn monte_carlo(&self, py: Python<'_>, runs: usize, base_seed: u64, mode: Option<&str>) -> PyResult<Vec<PyRunResult>> {
        let factory = self.factory(mode)?;
        let realizations: Vec<DisturbanceRealization> = sim::uniform_realizations(base_seed, runs);
        let ts = self.scenario.sample_time;
        let report = py
            .detach(|| sim::run_monte_carlo(&factory, &realizations, ts))
            .map_err(to_py)?;
        Ok(report.logs.iter().map(PyRunResult::from).collect())
    }

    /// Equalized objectives of robust, alternating and fallback-only control,
    /// normalized by the robust one.
    fn fallback_study(&self, py: Python<'_>) -> PyResult<(f64, f64, f64)> {
        let factory = self.factory(None)?;
        let realization = self.config.realization();
        let ts = self.scenario.sample_time;
        let (study, _) = py
            .detach(|| sim::fallback_alternation_study(&factory, &realization, ts))
            .map_err(to_py)?;
        Ok((study.normalized[0], study.normalized[1], study.normalized[2]))
    }
}

#[pymodule]
fn shrinkmpc_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyInterval>()?;
    m.add_class::<PyZonotope>()?;
    m.add_class::<PyFtmsModel>()?;
    m.add_class::<PyScenario>()?;
    m.add_class::<PyRunResult>()?;
    Ok(())
}
