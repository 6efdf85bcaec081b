//! Valid-reference iteration and the shrinking-horizon controller with LQR
//! fallback.

use std::sync::Arc;
use std::time::Instant;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::error_sets::{propagate_error_sets, tighten_constraints, ErrorSets, TightenedConstraints};
use crate::ltv::{linearize_with_gains, LqrWeights, LtvModel, ReferenceTrajectory, DYNAMICS_TOL};
use crate::model::{DisturbanceSpec, Model, OutputMap};
use crate::optimizer::{solve_problem2, CostWeights, OcpInstance, SlSettings, SolverReport, SolverStatus};
use crate::sets::Interval;

/// Slack on tightened-set membership when judging validity.
pub const VALIDITY_SLACK: f64 = 1e-9;

/// Everything that defines the control task, independent of the controller.
#[derive(Clone)]
pub struct ControlProblem {
    pub model: Arc<dyn Model>,
    pub output: OutputMap,
    pub disturbance: DisturbanceSpec,
    pub state_box: Interval,
    pub input_box: Interval,
    pub x0: DVector<f64>,
}

impl ControlProblem {
    pub fn new(
        model: Arc<dyn Model>,
        output: OutputMap,
        disturbance: DisturbanceSpec,
        state_box: Interval,
        input_box: Interval,
        x0: DVector<f64>,
    ) -> Result<Self> {
        let sig = model.signature();
        if disturbance.len() != output.horizon() {
            return Err(Error::DimensionMismatch {
                context: "disturbance horizon against output horizon",
                expected: output.horizon(),
                found: disturbance.len(),
            });
        }
        if state_box.dim() != sig.n_x || x0.len() != sig.n_x || input_box.dim() != sig.n_u {
            return Err(Error::DimensionMismatch {
                context: "control problem boxes",
                expected: sig.n_x,
                found: state_box.dim(),
            });
        }
        Ok(Self {
            model,
            output,
            disturbance,
            state_box,
            input_box,
            x0,
        })
    }

    pub fn horizon(&self) -> usize {
        self.output.horizon()
    }

    /// Disturbance references from `step` to the end.
    pub fn d_ref_from(&self, step: usize) -> Vec<DVector<f64>> {
        self.disturbance.references()[step..].to_vec()
    }
}

/// Which tightening the next solve uses after an invalid iterate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TighteningSource {
    LatestIterate,
    LastValid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControllerConfig {
    /// Iteration budget of the valid-reference search at each step.
    pub max_iters: usize,
    /// Iteration budget for the offline initial trajectory.
    pub max_iters_init: usize,
    pub state_weights: Vec<f64>,
    pub input_weights: Vec<f64>,
    pub cost: CostWeights,
    pub tightening_source: TighteningSource,
    pub solver: SlSettings,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        Self {
            max_iters: 20,
            max_iters_init: 100,
            state_weights: vec![1.0 / 500.0, 1.0 / 100.0, 40.0 / 300.0],
            input_weights: vec![1.0, 0.01],
            cost: CostWeights::ftms(),
            tightening_source: TighteningSource::LatestIterate,
            solver: SlSettings::default(),
        }
    }
}

impl ControllerConfig {
    pub fn lqr(&self) -> Result<LqrWeights> {
        LqrWeights::diagonal(&self.state_weights, &self.input_weights)
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 || self.max_iters_init == 0 {
            return Err(Error::Config("iteration budgets must be positive".into()));
        }
        self.lqr().map_err(|e| Error::Config(e.to_string()))?;
        self.solver.validate()
    }
}

/// Linearization, error sets and tightening computed from one reference.
#[derive(Debug, Clone)]
pub struct Assessment {
    pub ltv: LtvModel,
    pub errors: ErrorSets,
    pub tightened: TightenedConstraints,
}

pub fn assess(problem: &ControlProblem, lqr: &LqrWeights, reference: &ReferenceTrajectory) -> Result<Assessment> {
    let model = problem.model.as_ref();
    let ltv = linearize_with_gains(model, reference, lqr)?;
    let errors = propagate_error_sets(model, &ltv, &problem.disturbance, reference)?;
    let tightened = tighten_constraints(&problem.output, &errors, &ltv)?;
    Ok(Assessment { ltv, errors, tightened })
}

/// A trajectory is valid when it satisfies the dynamics and its outputs lie
/// in the tightening computed from that same trajectory.
pub fn check_validity(
    model: &dyn Model,
    reference: &ReferenceTrajectory,
    tightened: &TightenedConstraints,
    out: &OutputMap,
) -> bool {
    if !tightened.feasible || tightened.start_step != reference.start_step() {
        return false;
    }
    match reference.dynamics_defect(model) {
        Ok(d) if d <= DYNAMICS_TOL => {}
        _ => return false,
    }
    let n = reference.len();
    (0..=n).all(|i| {
        let step = reference.start_step() + i;
        let u = if i < n { Some(&reference.inputs()[i]) } else { None };
        let y = out.output(step, &reference.states()[i], u);
        tightened.sets[i].contains_with_slack(&y, VALIDITY_SLACK)
    })
}

/// Result of the valid-reference search at one step.
#[derive(Debug, Clone)]
pub struct SearchOutcome {
    pub success: bool,
    pub iterations: usize,
    /// The valid trajectory and its assessment when `success`.
    pub reference: Option<(ReferenceTrajectory, Assessment)>,
    pub last_report: Option<SolverReport>,
    pub qp_iterations: usize,
}

/// Iterates solve → re-assess → validate from `start`, whose first state is
/// the measured state. `objective = None` searches for any valid trajectory.
pub fn optimize_valid_reference(
    problem: &ControlProblem,
    config: &ControllerConfig,
    start: &ReferenceTrajectory,
    u_prev: &DVector<f64>,
    objective: Option<&CostWeights>,
    max_iters: usize,
) -> Result<SearchOutcome> {
    let lqr = config.lqr()?;
    let model = problem.model.as_ref();
    let k = start.start_step();
    let d_ref = problem.d_ref_from(k);
    let mut outcome = SearchOutcome {
        success: false,
        iterations: 0,
        reference: None,
        last_report: None,
        qp_iterations: 0,
    };
    let mut guess = start.clone();
    let mut tightened = match assess(problem, &lqr, start) {
        Ok(a) => a.tightened,
        Err(_) => {
            outcome.iterations = max_iters;
            return Ok(outcome);
        }
    };

    while outcome.iterations < max_iters {
        outcome.iterations += 1;
        if !tightened.feasible {
            // nothing changes before the next attempt, so the rest of the
            // budget would fail the same way
            outcome.iterations = max_iters;
            break;
        }
        let inst = OcpInstance {
            model,
            output: &problem.output,
            constraints: &tightened,
            state_box: &problem.state_box,
            x0: start.states()[0].clone(),
            start_step: k,
            d_ref: &d_ref,
            objective,
            u_prev: u_prev.clone(),
        };
        let (candidate, report) = match solve_problem2(&inst, &guess, &config.solver) {
            Ok(r) => r,
            Err(_) => {
                outcome.iterations = max_iters;
                break;
            }
        };
        outcome.qp_iterations += report.iterations;
        let failed_qp = report.status == SolverStatus::QpFailure;
        outcome.last_report = Some(report);

        let assessment = match assess(problem, &lqr, &candidate) {
            Ok(a) => a,
            Err(_) => {
                if candidate == guess {
                    outcome.iterations = max_iters;
                }
                continue;
            }
        };
        if check_validity(model, &candidate, &assessment.tightened, &problem.output) {
            outcome.success = true;
            outcome.reference = Some((candidate, assessment));
            return Ok(outcome);
        }
        let unchanged = candidate.inputs() == guess.inputs();
        if config.tightening_source == TighteningSource::LatestIterate {
            tightened = assessment.tightened;
        } else if unchanged && failed_qp {
            // identical instance next time: the remaining budget would fail the same way
            outcome.iterations = max_iters;
        }
        guess = candidate;
    }
    Ok(outcome)
}

/// Offline search for a first valid trajectory from the rollout of
/// `guess_inputs` (one input per step, or one input held constant).
pub fn generate_initial_reference(
    problem: &ControlProblem,
    config: &ControllerConfig,
    guess_inputs: &[DVector<f64>],
) -> Result<(ReferenceTrajectory, Assessment)> {
    let n = problem.horizon();
    let inputs = match guess_inputs.len() {
        1 => vec![guess_inputs[0].clone(); n],
        len if len == n => guess_inputs.to_vec(),
        len => {
            return Err(Error::DimensionMismatch {
                context: "initial input guess",
                expected: n,
                found: len,
            })
        }
    };
    let u_prev = inputs[0].clone();
    let start = ReferenceTrajectory::rollout(problem.model.as_ref(), 0, problem.x0.clone(), inputs, problem.d_ref_from(0))?;
    let lqr = config.lqr()?;
    if let Ok(a) = assess(problem, &lqr, &start) {
        if check_validity(problem.model.as_ref(), &start, &a.tightened, &problem.output) {
            return Ok((start, a));
        }
    }
    let outcome = optimize_valid_reference(problem, config, &start, &u_prev, None, config.max_iters_init)?;
    outcome.reference.ok_or(Error::NoValidInitialTrajectory {
        iterations: outcome.iterations,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ControlMode {
    /// Valid-reference search each step, fallback on failure.
    Robust,
    /// One solve per step against the untightened constraints.
    Nominal,
    /// Fallback feedback around the initial reference throughout.
    FallbackOnly,
    /// Robust control with the optimization disabled in alternating periods.
    FallbackAlternating,
}

impl ControlMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            ControlMode::Robust => "robust",
            ControlMode::Nominal => "nominal",
            ControlMode::FallbackOnly => "fallback-only",
            ControlMode::FallbackAlternating => "fallback-alternating",
        }
    }
}

impl std::str::FromStr for ControlMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "robust" => Ok(ControlMode::Robust),
            "nominal" => Ok(ControlMode::Nominal),
            "fallback-only" => Ok(ControlMode::FallbackOnly),
            "fallback-alternating" => Ok(ControlMode::FallbackAlternating),
            other => Err(Error::Config(format!("unknown control mode '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StepMode {
    Optimized,
    Fallback,
}

impl StepMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            StepMode::Optimized => "optimized",
            StepMode::Fallback => "fallback",
        }
    }
}

#[derive(Debug, Clone)]
pub struct StepDecision {
    pub input: DVector<f64>,
    pub mode: StepMode,
    /// Outer iterations spent; zero when no optimization ran.
    pub iterations: usize,
    pub qp_iterations: usize,
    pub report: Option<SolverReport>,
    /// The fallback input had to be clipped to the input box.
    pub clamped: bool,
    pub solve_time: f64,
}

/// Shrinking-horizon controller. Holds the last valid reference, the gains
/// computed along it and the step `k_v` it was produced at.
pub struct Controller {
    problem: Arc<ControlProblem>,
    config: ControllerConfig,
    mode: ControlMode,
    /// Steps per on/off period in alternating mode.
    alternation_steps: usize,
    initial: (ReferenceTrajectory, Assessment),
    stored: ReferenceTrajectory,
    stored_gains: Vec<nalgebra::DMatrix<f64>>,
    valid_step: usize,
    u_prev: DVector<f64>,
    next_step: usize,
}

impl Controller {
    /// `initial` must be valid for step 0 with `assessment` computed from it.
    pub fn new(
        problem: Arc<ControlProblem>,
        config: ControllerConfig,
        mode: ControlMode,
        initial: ReferenceTrajectory,
        assessment: Assessment,
        alternation_steps: usize,
    ) -> Result<Self> {
        config.validate()?;
        if initial.start_step() != 0 || initial.len() != problem.horizon() {
            return Err(Error::InvalidArgument("initial reference must span the whole mission".into()));
        }
        if !check_validity(problem.model.as_ref(), &initial, &assessment.tightened, &problem.output) {
            return Err(Error::InvalidArgument("initial reference is not valid".into()));
        }
        if mode == ControlMode::FallbackAlternating && alternation_steps == 0 {
            return Err(Error::Config("alternation period must span at least one step".into()));
        }
        Ok(Self {
            u_prev: initial.inputs()[0].clone(),
            stored_gains: assessment.ltv.gains.clone(),
            stored: initial.clone(),
            initial: (initial, assessment),
            problem,
            config,
            mode,
            alternation_steps,
            valid_step: 0,
            next_step: 0,
        })
    }

    pub fn mode(&self) -> ControlMode {
        self.mode
    }

    pub fn initial_reference(&self) -> &ReferenceTrajectory {
        &self.initial.0
    }

    pub fn initial_assessment(&self) -> &Assessment {
        &self.initial.1
    }

    pub fn stored_reference(&self) -> &ReferenceTrajectory {
        &self.stored
    }

    /// Step at which the stored reference was produced.
    pub fn valid_step(&self) -> usize {
        self.valid_step
    }

    /// Input the cost treats as `u_{k−1}` at the next step.
    pub fn previous_input(&self) -> &DVector<f64> {
        &self.u_prev
    }

    /// Fallback `uʳ + K (x − xʳ)` from the stored reference, clipped to the
    /// input box.
    pub fn fallback_input(&self, k: usize, x: &DVector<f64>) -> Result<(DVector<f64>, bool)> {
        let i = k
            .checked_sub(self.valid_step)
            .filter(|&i| i < self.stored_gains.len())
            .ok_or(Error::StepOutOfRange {
                step: k,
                horizon: self.problem.horizon(),
            })?;
        let u = self.stored.input_at(k)? + &self.stored_gains[i] * (x - self.stored.state_at(k)?);
        let b = &self.problem.input_box;
        let clamped_u = DVector::from_fn(u.len(), |j, _| u[j].clamp(b.lower()[j], b.upper()[j]));
        let clamped = clamped_u != u;
        Ok((clamped_u, clamped))
    }

    fn optimization_enabled(&self, k: usize) -> bool {
        match self.mode {
            ControlMode::Robust | ControlMode::Nominal => true,
            ControlMode::FallbackOnly => false,
            ControlMode::FallbackAlternating => (k / self.alternation_steps) % 2 == 0,
        }
    }

    /// Computes and commits the input for step `k` given the measured state.
    /// Steps must be visited in order.
    pub fn step(&mut self, k: usize, x: &DVector<f64>) -> Result<StepDecision> {
        let horizon = self.problem.horizon();
        if k >= horizon || k != self.next_step {
            return Err(Error::StepOutOfRange { step: k, horizon });
        }
        let started = Instant::now();
        let decision = if self.mode == ControlMode::Nominal {
            self.nominal_step(k, x)?
        } else if self.optimization_enabled(k) {
            self.robust_step(k, x)?
        } else {
            let (input, clamped) = self.fallback_input(k, x)?;
            StepDecision {
                input,
                mode: StepMode::Fallback,
                iterations: 0,
                qp_iterations: 0,
                report: None,
                clamped,
                solve_time: 0.0,
            }
        };
        self.u_prev = decision.input.clone();
        self.next_step = k + 1;
        Ok(StepDecision {
            solve_time: started.elapsed().as_secs_f64(),
            ..decision
        })
    }

    fn warm_start(&self, k: usize, x: &DVector<f64>) -> Result<ReferenceTrajectory> {
        let tail = self.stored.shifted(k)?;
        let model = self.problem.model.as_ref();
        ReferenceTrajectory::rollout(model, k, x.clone(), tail.inputs().to_vec(), tail.disturbances().to_vec())
            .or_else(|_| tail.with_initial_state(x.clone()))
    }

    fn robust_step(&mut self, k: usize, x: &DVector<f64>) -> Result<StepDecision> {
        let start = self.warm_start(k, x)?;
        let outcome = optimize_valid_reference(
            &self.problem,
            &self.config,
            &start,
            &self.u_prev,
            Some(&self.config.cost),
            self.config.max_iters,
        )?;
        if let Some((reference, assessment)) = outcome.reference {
            let input = reference.inputs()[0].clone();
            self.stored = reference;
            self.stored_gains = assessment.ltv.gains;
            self.valid_step = k;
            return Ok(StepDecision {
                input,
                mode: StepMode::Optimized,
                iterations: outcome.iterations,
                qp_iterations: outcome.qp_iterations,
                report: outcome.last_report,
                clamped: false,
                solve_time: 0.0,
            });
        }
        let (input, clamped) = self.fallback_input(k, x)?;
        Ok(StepDecision {
            input,
            mode: StepMode::Fallback,
            iterations: outcome.iterations,
            qp_iterations: outcome.qp_iterations,
            report: outcome.last_report,
            clamped,
            solve_time: 0.0,
        })
    }

    /// Plain shrinking-horizon NMPC: one solve against the original
    /// constraints, first input applied whatever the solver status.
    fn nominal_step(&mut self, k: usize, x: &DVector<f64>) -> Result<StepDecision> {
        let start = self.warm_start(k, x)?;
        let constraints = TightenedConstraints::untightened(&self.problem.output, k);
        let d_ref = self.problem.d_ref_from(k);
        let inst = OcpInstance {
            model: self.problem.model.as_ref(),
            output: &self.problem.output,
            constraints: &constraints,
            state_box: &self.problem.state_box,
            x0: x.clone(),
            start_step: k,
            d_ref: &d_ref,
            objective: Some(&self.config.cost),
            u_prev: self.u_prev.clone(),
        };
        let (plan, report) = solve_problem2(&inst, &start, &self.config.solver)?;
        let input = plan.inputs()[0].clone();
        let mode = if report.status == SolverStatus::Converged {
            StepMode::Optimized
        } else {
            StepMode::Fallback
        };
        let qp_iterations = report.iterations;
        // keep the plan as the next warm start; its gains are never used
        self.stored_gains = vec![nalgebra::DMatrix::zeros(input.len(), x.len()); plan.len()];
        self.stored = plan;
        self.valid_step = k;
        Ok(StepDecision {
            input,
            mode,
            iterations: 1,
            qp_iterations,
            report: Some(report),
            clamped: false,
            solve_time: 0.0,
        })
    }
}
