//! Scenario files.
//!
//! Scenarios are TOML documents with the sections `model`, `disturbance`,
//! `controller`, `solver`, `montecarlo`, `study` and `output`. Every key is
//! optional and unknown keys are rejected. Dotted-key overrides such as
//! `controller.mode=nominal` are applied to the parsed document before
//! validation, so command-line flags and files share one schema.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::controller::{
    assess, check_validity, generate_initial_reference, Assessment, ControlMode, ControlProblem, ControllerConfig,
    TighteningSource,
};
use crate::error::{Error, Result};
use crate::model::ftms::{FtmsModel, FtmsParams};
use crate::model::{DisturbanceSpec, ReferenceProfile};
use crate::optimizer::{CostWeights, SlSettings};
use crate::ltv::ReferenceTrajectory;
use crate::sim::{ControllerFactory, DisturbanceRealization, RealizationKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    Ftms,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub kind: ModelKind,
    /// Controller and plant sample time \[s\].
    pub sample_time: f64,
    /// Mission end time \[s\]; must be a whole number of samples.
    pub final_time: f64,
    pub params: FtmsParams,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            kind: ModelKind::Ftms,
            sample_time: 100.0,
            final_time: 10000.0,
            params: FtmsParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DisturbanceSection {
    pub kind: RealizationKind,
    pub seed: u64,
    /// Square-wave period \[s\].
    pub period: f64,
    /// Half-width of the deviation bound \[W\].
    pub radius: f64,
    /// `(time, value)` breakpoints of the disturbance reference.
    pub profile: Vec<(f64, f64)>,
}

impl Default for DisturbanceSection {
    fn default() -> Self {
        Self {
            kind: RealizationKind::SquareWave,
            seed: 0,
            period: 2000.0,
            radius: 27500.0,
            profile: default_profile(),
        }
    }
}

/// 55 kW throughout, with one excursion to 65 kW mid-mission.
pub fn default_profile() -> Vec<(f64, f64)> {
    vec![
        (0.0, 55000.0),
        (4000.0, 55000.0),
        (5000.0, 65000.0),
        (6000.0, 65000.0),
        (7000.0, 55000.0),
        (10000.0, 55000.0),
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControllerSection {
    pub mode: ControlMode,
    /// On/off period of the alternating mode \[s\].
    pub alternation_period: f64,
    pub max_iters: usize,
    pub max_iters_init: usize,
    pub state_weights: Vec<f64>,
    pub input_weights: Vec<f64>,
    /// Weight on input increments in the objective.
    pub rate_weight: f64,
    /// Per-input quadratic weights in the objective.
    pub input_cost: Vec<f64>,
    pub tightening_source: TighteningSource,
    /// Constant input used as the starting guess for the initial trajectory.
    pub initial_input: Vec<f64>,
    /// Trajectory file to start from instead of generating one.
    pub initial_trajectory: Option<PathBuf>,
}

impl Default for ControllerSection {
    fn default() -> Self {
        let base = ControllerConfig::default();
        Self {
            mode: ControlMode::Robust,
            alternation_period: 500.0,
            max_iters: base.max_iters,
            max_iters_init: base.max_iters_init,
            state_weights: base.state_weights,
            input_weights: base.input_weights,
            rate_weight: base.cost.rate,
            input_cost: base.cost.input,
            tightening_source: base.tightening_source,
            initial_input: vec![0.74, 0.6],
            initial_trajectory: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MonteCarloSection {
    pub runs: usize,
    /// Run `i` uses seed `base_seed + i`.
    pub base_seed: u64,
    /// Also run the constant-high and constant-low realizations.
    pub include_extremes: bool,
}

impl Default for MonteCarloSection {
    fn default() -> Self {
        Self {
            runs: 20,
            base_seed: 1,
            include_extremes: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
    /// File stem for every artifact of the scenario.
    pub name: String,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("output"),
            name: "scenario".into(),
        }
    }
}

/// Multi-run comparisons launched by `run`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StudySection {
    /// Compare robust, alternating and fallback-only control on the
    /// configured realization instead of running `controller.mode` alone.
    pub fallback_alternation: bool,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub model: ModelSection,
    pub disturbance: DisturbanceSection,
    pub controller: ControllerSection,
    pub solver: SlSettings,
    pub montecarlo: MonteCarloSection,
    pub study: StudySection,
    pub output: OutputSection,
}

/// Parses `value` as a TOML literal, falling back to a bare string.
fn parse_override_value(value: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {value}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(value.to_string()))
}

fn apply_override(doc: &mut toml::Table, key: &str, value: &str) -> Result<()> {
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::Config(format!("malformed override key '{key}'")));
    }
    let (last, path) = parts.split_last().expect("non-empty split");
    let mut table = doc;
    for part in path {
        let entry = table
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override '{key}' descends into non-table '{part}'")))?;
    }
    table.insert(last.to_string(), parse_override_value(value));
    Ok(())
}

impl ScenarioConfig {
    /// Parses `text`, applies `key=value` overrides and validates.
    pub fn from_toml_str(text: &str, overrides: &[(String, String)]) -> Result<Self> {
        let mut doc: toml::Table = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        for (k, v) in overrides {
            apply_override(&mut doc, k, v)?;
        }
        let config: Self = toml::Value::Table(doc)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    /// Reads a scenario file. A relative `initial_trajectory` is resolved
    /// against the file's directory.
    pub fn load(path: &Path, overrides: &[(String, String)]) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut config = Self::from_toml_str(&text, overrides)?;
        if let (Some(traj), Some(dir)) = (&config.controller.initial_trajectory, path.parent()) {
            if traj.is_relative() {
                config.controller.initial_trajectory = Some(dir.join(traj));
            }
        }
        Ok(config)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Number of controller steps `N`.
    pub fn steps(&self) -> Result<usize> {
        let ratio = self.model.final_time / self.model.sample_time;
        let n = ratio.round();
        if !(n >= 1.0) || (ratio - n).abs() > 1e-9 * ratio.max(1.0) {
            return Err(Error::Config(format!(
                "final time {} is not a positive multiple of the sample time {}",
                self.model.final_time, self.model.sample_time
            )));
        }
        Ok(n as usize)
    }

    pub fn validate(&self) -> Result<()> {
        let m = &self.model;
        if !(m.sample_time > 0.0 && m.sample_time.is_finite()) {
            return Err(Error::Config("model.sample_time must be positive".into()));
        }
        self.steps()?;
        m.params.validate().map_err(|e| Error::Config(e.to_string()))?;
        let d = &self.disturbance;
        if !(d.radius >= 0.0 && d.radius.is_finite()) {
            return Err(Error::Config("disturbance.radius must be non-negative".into()));
        }
        if d.kind == RealizationKind::SquareWave && !(d.period > 0.0 && d.period.is_finite()) {
            return Err(Error::Config("disturbance.period must be positive".into()));
        }
        ReferenceProfile::new(d.profile.clone()).map_err(|e| Error::Config(format!("disturbance.profile: {e}")))?;
        let c = &self.controller;
        if c.mode == ControlMode::FallbackAlternating && !(c.alternation_period >= m.sample_time) {
            return Err(Error::Config(
                "controller.alternation_period must span at least one sample".into(),
            ));
        }
        if c.initial_input.len() != 2 || c.input_cost.len() != 2 {
            return Err(Error::Config("controller.initial_input and controller.input_cost need two entries".into()));
        }
        if !(c.rate_weight >= 0.0) || c.input_cost.iter().any(|w| !(*w >= 0.0)) {
            return Err(Error::Config("objective weights must be non-negative".into()));
        }
        self.controller_config().validate().map_err(|e| Error::Config(e.to_string()))?;
        if self.montecarlo.runs == 0 {
            return Err(Error::Config("montecarlo.runs must be at least 1".into()));
        }
        if self.output.name.is_empty() || self.output.name.contains(['/', '\\']) {
            return Err(Error::Config("output.name must be a plain file stem".into()));
        }
        Ok(())
    }

    pub fn controller_config(&self) -> ControllerConfig {
        let c = &self.controller;
        ControllerConfig {
            max_iters: c.max_iters,
            max_iters_init: c.max_iters_init,
            state_weights: c.state_weights.clone(),
            input_weights: c.input_weights.clone(),
            cost: CostWeights {
                rate: c.rate_weight,
                input: c.input_cost.clone(),
            },
            tightening_source: c.tightening_source,
            solver: self.solver.clone(),
        }
    }

    pub fn realization(&self) -> DisturbanceRealization {
        let d = &self.disturbance;
        DisturbanceRealization::new(d.kind, d.seed, d.period)
    }

    /// Steps per on/off period of the alternating mode.
    pub fn alternation_steps(&self) -> usize {
        ((self.controller.alternation_period / self.model.sample_time).round() as usize).max(1)
    }

    pub fn build(&self) -> Result<Scenario> {
        self.validate()?;
        let n = self.steps()?;
        let model = FtmsModel::new(self.model.params.clone(), self.model.sample_time)?;
        let profile = ReferenceProfile::new(self.disturbance.profile.clone())?;
        let disturbance =
            DisturbanceSpec::from_profile(&profile, self.model.sample_time, n, self.disturbance.radius)?;
        let output = model.output_map(n)?;
        let problem = ControlProblem::new(
            Arc::new(model.clone()),
            output,
            disturbance,
            model.state_bounds(),
            model.input_bounds(),
            model.initial_state(),
        )?;
        Ok(Scenario {
            model,
            problem: Arc::new(problem),
            controller: self.controller_config(),
            mode: self.controller.mode,
            alternation_steps: self.alternation_steps(),
            initial_guess: vec![DVector::from_column_slice(&self.controller.initial_input)],
            sample_time: self.model.sample_time,
        })
    }
}

/// A validated scenario turned into solver objects.
pub struct Scenario {
    pub model: FtmsModel,
    pub problem: Arc<ControlProblem>,
    pub controller: ControllerConfig,
    pub mode: ControlMode,
    pub alternation_steps: usize,
    pub initial_guess: Vec<DVector<f64>>,
    pub sample_time: f64,
}

impl Scenario {
    /// Offline initial trajectory from the configured constant input guess.
    pub fn generate_initial(&self) -> Result<(ReferenceTrajectory, Assessment)> {
        generate_initial_reference(&self.problem, &self.controller, &self.initial_guess)
    }

    /// Accepts a stored trajectory after checking that it spans the mission,
    /// starts at the initial state and is valid.
    pub fn adopt_initial(&self, traj: ReferenceTrajectory) -> Result<(ReferenceTrajectory, Assessment)> {
        let p = &self.problem;
        if traj.start_step() != 0 || traj.len() != p.horizon() {
            return Err(Error::InvalidArgument(format!(
                "trajectory spans steps {}..{}, expected 0..{}",
                traj.start_step(),
                traj.end_step(),
                p.horizon()
            )));
        }
        if traj.states()[0] != p.x0 {
            return Err(Error::InvalidArgument("trajectory does not start at the initial state".into()));
        }
        let assessment = assess(p, &self.controller.lqr()?, &traj)?;
        if !check_validity(p.model.as_ref(), &traj, &assessment.tightened, &p.output) {
            return Err(Error::InvalidArgument("trajectory is not valid for this scenario".into()));
        }
        Ok((traj, assessment))
    }

    pub fn factory(&self, initial: (ReferenceTrajectory, Assessment)) -> ControllerFactory {
        ControllerFactory {
            problem: self.problem.clone(),
            config: self.controller.clone(),
            mode: self.mode,
            alternation_steps: self.alternation_steps,
            initial: initial.0,
            assessment: initial.1,
        }
    }
}
