//! Plant-in-the-loop simulation, disturbance realizations and Monte Carlo
//! experiments.
//!
//! The plant is stepped with `d_k = dʳ_k + Δd_k`. The controller only ever
//! sees the measured state and the step index, never `Δd_k`.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::controller::{Assessment, ControlMode, ControlProblem, Controller, ControllerConfig, StepMode};
use crate::error::{Error, Result};
use crate::ltv::ReferenceTrajectory;
use crate::optimizer::{evaluate_cost, CostWeights, SolverStatus};
use crate::sets::Interval;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RealizationKind {
    /// Alternates between the upper and lower bound, starting high.
    SquareWave,
    /// Independent uniform samples, held over each step.
    Uniform,
    ConstantHigh,
    ConstantLow,
    Zero,
}

impl RealizationKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            RealizationKind::SquareWave => "square-wave",
            RealizationKind::Uniform => "uniform",
            RealizationKind::ConstantHigh => "constant-high",
            RealizationKind::ConstantLow => "constant-low",
            RealizationKind::Zero => "zero",
        }
    }
}

impl std::str::FromStr for RealizationKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "square-wave" => Ok(RealizationKind::SquareWave),
            "uniform" => Ok(RealizationKind::Uniform),
            "constant-high" => Ok(RealizationKind::ConstantHigh),
            "constant-low" => Ok(RealizationKind::ConstantLow),
            "zero" => Ok(RealizationKind::Zero),
            other => Err(Error::Config(format!("unknown disturbance kind '{other}'"))),
        }
    }
}

/// Recipe for the unknown disturbance deviations `Δd_k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DisturbanceRealization {
    pub kind: RealizationKind,
    /// Seed of the ChaCha8 stream used by the uniform kind.
    pub seed: u64,
    /// Square-wave period in seconds (50 % duty cycle).
    pub period: f64,
}

impl DisturbanceRealization {
    pub fn new(kind: RealizationKind, seed: u64, period: f64) -> Self {
        Self { kind, seed, period }
    }

    /// One deviation per step, each inside the matching bound.
    pub fn sample(&self, bounds: &[Interval], sample_time: f64) -> Result<Vec<DVector<f64>>> {
        if self.kind == RealizationKind::SquareWave && !(self.period > 0.0 && self.period.is_finite()) {
            return Err(Error::Config("square-wave period must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let samples = bounds
            .iter()
            .enumerate()
            .map(|(k, b)| {
                let (lo, hi) = (b.lower(), b.upper());
                match self.kind {
                    RealizationKind::SquareWave => {
                        let phase = (k as f64 * sample_time).rem_euclid(self.period);
                        if phase < 0.5 * self.period {
                            hi.clone()
                        } else {
                            lo.clone()
                        }
                    }
                    RealizationKind::Uniform => {
                        DVector::from_fn(lo.len(), |j, _| if lo[j] < hi[j] { rng.random_range(lo[j]..=hi[j]) } else { lo[j] })
                    }
                    RealizationKind::ConstantHigh => hi.clone(),
                    RealizationKind::ConstantLow => lo.clone(),
                    RealizationKind::Zero => DVector::zeros(lo.len()),
                }
            })
            .collect();
        Ok(samples)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub k: usize,
    pub state: DVector<f64>,
    pub input: DVector<f64>,
    pub d_ref: DVector<f64>,
    pub d_offset: DVector<f64>,
    pub mode: StepMode,
    pub iterations: usize,
    pub qp_iterations: usize,
    pub status: Option<SolverStatus>,
    pub clamped: bool,
    pub solve_time: f64,
    /// Closed-loop cost of the inputs applied so far, including this one.
    pub cost_to_date: f64,
}

/// Deviation of the closed loop from the initial reference, measured against
/// the error sets computed at step 0.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Containment {
    /// Steps where the error left its set.
    pub outside_steps: usize,
    /// Per-axis maximum over `k` of `|e_k − c_k| / r_k`, where `c_k` and
    /// `r_k` are the center and radius of the error set.
    pub tightness: Vec<f64>,
}

impl Containment {
    pub fn contained(&self) -> bool {
        self.outside_steps == 0
    }
}

#[derive(Debug, Clone)]
pub struct ClosedLoopLog {
    pub sample_time: f64,
    pub mode: ControlMode,
    pub realization: DisturbanceRealization,
    /// `x_0 … x_N`; shorter when the run failed.
    pub states: Vec<DVector<f64>>,
    pub records: Vec<StepRecord>,
    /// Violations of the original output constraints, per output row.
    pub row_violations: Vec<usize>,
    /// Steps with at least one violated output row.
    pub violation_steps: usize,
    pub objective: f64,
    pub equalized_objective: f64,
    pub optimized_steps: usize,
    pub converged_steps: usize,
    pub clamp_count: usize,
    pub containment: Option<Containment>,
    pub failure: Option<String>,
}

impl ClosedLoopLog {
    pub fn failed(&self) -> bool {
        self.failure.is_some()
    }

    /// Fraction of steps at which the optimization produced a valid
    /// reference.
    pub fn success_rate(&self) -> f64 {
        if self.records.is_empty() {
            0.0
        } else {
            self.optimized_steps as f64 / self.records.len() as f64
        }
    }
}

fn count_violations(problem: &ControlProblem, log: &mut ClosedLoopLog) {
    let out = &problem.output;
    log.row_violations = vec![0; out.n_y(0).max(out.n_y(out.horizon()))];
    for (k, x) in log.states.iter().enumerate() {
        let u = log.records.get(k).map(|r| &r.input);
        if k < out.horizon() && u.is_none() {
            break;
        }
        let y = out.output(k, x, u);
        let set = out.set(k);
        let mut any = false;
        for r in 0..y.len() {
            if y[r] < set.lower()[r] || y[r] > set.upper()[r] {
                log.row_violations[r] += 1;
                any = true;
            }
        }
        if any {
            log.violation_steps += 1;
        }
    }
}

fn measure_containment(states: &[DVector<f64>], reference: &ReferenceTrajectory, assessment: &Assessment) -> Containment {
    let n_x = reference.states()[0].len();
    let mut tightness = vec![0.0; n_x];
    let mut outside_steps = 0;
    for (k, x) in states.iter().enumerate() {
        let set = &assessment.errors.errors[k];
        let e = x - &reference.states()[k];
        if !set.contains(&e) {
            outside_steps += 1;
        }
        let (center, radius) = (set.center(), set.radius());
        for j in 0..n_x {
            if radius[j] > 0.0 {
                tightness[j] = f64::max(tightness[j], (e[j] - center[j]).abs() / radius[j]);
            }
        }
    }
    Containment { outside_steps, tightness }
}

/// Runs the whole mission under `realization`. Plant failures end the run
/// early and are recorded in [`ClosedLoopLog::failure`]; controller misuse
/// (wrong dimensions) is an error.
pub fn run_closed_loop(
    problem: &ControlProblem,
    controller: &mut Controller,
    realization: &DisturbanceRealization,
    cost: &CostWeights,
    sample_time: f64,
) -> Result<ClosedLoopLog> {
    let n = problem.horizon();
    let bounds: Vec<Interval> = (0..n).map(|k| problem.disturbance.bound(k).clone()).collect();
    let offsets = realization.sample(&bounds, sample_time)?;
    let mut log = ClosedLoopLog {
        sample_time,
        mode: controller.mode(),
        realization: *realization,
        states: vec![problem.x0.clone()],
        records: Vec::with_capacity(n),
        row_violations: Vec::new(),
        violation_steps: 0,
        objective: 0.0,
        equalized_objective: 0.0,
        optimized_steps: 0,
        converged_steps: 0,
        clamp_count: 0,
        containment: None,
        failure: None,
    };
    let mut previous = controller.initial_reference().inputs()[0].clone();
    let mut cost_to_date = 0.0;
    let mut x = problem.x0.clone();

    for (k, offset) in offsets.into_iter().enumerate() {
        let decision = match controller.step(k, &x) {
            Ok(d) => d,
            Err(e @ Error::DimensionMismatch { .. }) => return Err(e),
            Err(e) => {
                log.failure = Some(format!("controller failed at step {k}: {e}"));
                break;
            }
        };
        cost_to_date += evaluate_cost(std::slice::from_ref(&decision.input), &previous, cost);
        previous = decision.input.clone();
        let d_ref = problem.disturbance.reference(k).clone();
        let next = problem.model.step(&x, &decision.input, &(&d_ref + &offset));
        log.optimized_steps += usize::from(decision.mode == StepMode::Optimized);
        log.converged_steps += usize::from(decision.report.as_ref().map(|r| r.status) == Some(SolverStatus::Converged));
        log.clamp_count += usize::from(decision.clamped);
        log.records.push(StepRecord {
            k,
            state: x.clone(),
            input: decision.input,
            d_ref,
            d_offset: offset,
            mode: decision.mode,
            iterations: decision.iterations,
            qp_iterations: decision.qp_iterations,
            status: decision.report.map(|r| r.status),
            clamped: decision.clamped,
            solve_time: decision.solve_time,
            cost_to_date,
        });
        match next {
            Ok(next) if next.iter().all(|v| v.is_finite()) => {
                x = next;
                log.states.push(x.clone());
            }
            Ok(_) => {
                log.failure = Some(format!("plant state became non-finite at step {}", k + 1));
                break;
            }
            Err(e) => {
                log.failure = Some(format!("plant failed at step {k}: {e}"));
                break;
            }
        }
    }

    log.objective = cost_to_date;
    log.equalized_objective = sample_time * cost_to_date;
    count_violations(problem, &mut log);
    if controller.mode() == ControlMode::FallbackOnly {
        log.containment = Some(measure_containment(
            &log.states,
            controller.initial_reference(),
            controller.initial_assessment(),
        ));
    }
    Ok(log)
}

/// Shared inputs for building independent controllers.
#[derive(Clone)]
pub struct ControllerFactory {
    pub problem: std::sync::Arc<ControlProblem>,
    pub config: ControllerConfig,
    pub mode: ControlMode,
    pub alternation_steps: usize,
    pub initial: ReferenceTrajectory,
    pub assessment: Assessment,
}

impl ControllerFactory {
    pub fn build(&self) -> Result<Controller> {
        self.build_with_mode(self.mode)
    }

    pub fn build_with_mode(&self, mode: ControlMode) -> Result<Controller> {
        Controller::new(
            self.problem.clone(),
            self.config.clone(),
            mode,
            self.initial.clone(),
            self.assessment.clone(),
            self.alternation_steps.max(1),
        )
    }

    pub fn run(&self, realization: &DisturbanceRealization, sample_time: f64) -> Result<ClosedLoopLog> {
        let mut controller = self.build()?;
        run_closed_loop(&self.problem, &mut controller, realization, &self.config.cost, sample_time)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct MonteCarloSummary {
    pub runs: usize,
    pub failed_runs: usize,
    pub total_violation_steps: usize,
    pub runs_with_violations: usize,
    /// Runs whose error stayed inside the error sets (fallback-only runs).
    pub contained_runs: usize,
    pub containment_checked: usize,
    /// Per-axis maximum tightness over all runs.
    pub max_tightness: Vec<f64>,
    pub objective_min: f64,
    pub objective_mean: f64,
    pub objective_max: f64,
    pub mean_success_rate: f64,
}

pub struct MonteCarloReport {
    pub logs: Vec<ClosedLoopLog>,
    pub summary: MonteCarloSummary,
}

pub fn summarize(logs: &[ClosedLoopLog]) -> MonteCarloSummary {
    let objectives: Vec<f64> = logs.iter().map(|l| l.equalized_objective).collect();
    let checked: Vec<&Containment> = logs.iter().filter_map(|l| l.containment.as_ref()).collect();
    let n_axes = checked.first().map_or(0, |c| c.tightness.len());
    let max_tightness = (0..n_axes)
        .map(|j| checked.iter().map(|c| c.tightness[j]).fold(0.0, f64::max))
        .collect();
    let count = logs.len().max(1) as f64;
    MonteCarloSummary {
        runs: logs.len(),
        failed_runs: logs.iter().filter(|l| l.failed()).count(),
        total_violation_steps: logs.iter().map(|l| l.violation_steps).sum(),
        runs_with_violations: logs.iter().filter(|l| l.violation_steps > 0).count(),
        contained_runs: checked.iter().filter(|c| c.contained()).count(),
        containment_checked: checked.len(),
        max_tightness,
        objective_min: objectives.iter().copied().fold(f64::INFINITY, f64::min),
        objective_mean: objectives.iter().sum::<f64>() / count,
        objective_max: objectives.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        mean_success_rate: logs.iter().map(|l| l.success_rate()).sum::<f64>() / count,
    }
}

/// Runs every realization on its own controller, in parallel. Logs come
/// back in input order.
pub fn run_monte_carlo(
    factory: &ControllerFactory,
    realizations: &[DisturbanceRealization],
    sample_time: f64,
) -> Result<MonteCarloReport> {
    if realizations.is_empty() {
        return Err(Error::InvalidArgument("Monte Carlo needs at least one run".into()));
    }
    let logs = realizations
        .par_iter()
        .map(|r| factory.run(r, sample_time))
        .collect::<Result<Vec<_>>>()?;
    let summary = summarize(&logs);
    Ok(MonteCarloReport { logs, summary })
}

/// `count` uniform realizations with seeds `base_seed, base_seed + 1, …`.
pub fn uniform_realizations(base_seed: u64, count: usize) -> Vec<DisturbanceRealization> {
    (0..count as u64)
        .map(|i| DisturbanceRealization::new(RealizationKind::Uniform, base_seed.wrapping_add(i), 0.0))
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct AlternationStudy {
    pub optimized: f64,
    pub alternating: f64,
    pub fallback_only: f64,
    /// The three objectives divided by the optimized one.
    pub normalized: [f64; 3],
    pub ordering_holds: bool,
    pub fallback_ratio: f64,
}

/// Same realization under the robust controller, the alternating schedule
/// and fallback only, compared by equalized objective.
pub fn fallback_alternation_study(
    factory: &ControllerFactory,
    realization: &DisturbanceRealization,
    sample_time: f64,
) -> Result<(AlternationStudy, [ClosedLoopLog; 3])> {
    let modes = [ControlMode::Robust, ControlMode::FallbackAlternating, ControlMode::FallbackOnly];
    let logs = modes
        .par_iter()
        .map(|&mode| {
            let mut controller = factory.build_with_mode(mode)?;
            run_closed_loop(&factory.problem, &mut controller, realization, &factory.config.cost, sample_time)
        })
        .collect::<Result<Vec<_>>>()?;
    let [opt, alt, fb]: [ClosedLoopLog; 3] = logs.try_into().expect("three modes");
    if let Some(log) = [&opt, &alt, &fb].into_iter().find(|l| l.failed()) {
        return Err(Error::Numerical(format!(
            "{} run failed: {}",
            log.mode.as_str(),
            log.failure.as_deref().unwrap_or_default()
        )));
    }
    let (o, a, f) = (opt.equalized_objective, alt.equalized_objective, fb.equalized_objective);
    let study = AlternationStudy {
        optimized: o,
        alternating: a,
        fallback_only: f,
        normalized: [1.0, a / o, f / o],
        ordering_holds: o <= a && a <= f,
        fallback_ratio: f / o,
    };
    Ok((study, [opt, alt, fb]))
}
