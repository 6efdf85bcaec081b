//! Successive-linearization solver for the nominal optimal control problem
//! over the remaining horizon.
//!
//! Every iterate is a nonlinear rollout of its input sequence, so returned
//! trajectories satisfy the dynamics exactly. Each iteration linearizes
//! along the iterate and solves a QP in scaled deviations with
//!
//! * linearized dynamics relaxed by penalized virtual-control slacks,
//! * output constraints `C δx + D δu ∈ Ŷ − ȳ`, relaxed per stage by one
//!   penalized slack so the subproblem is always feasible,
//! * a fixed box trust region on the deviations.
//!
//! Steps are accepted by backtracking on the exact-penalty merit
//! `ℓ(U) + w Σ_i max_r viol_{i,r}`.

use std::time::Instant;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::error_sets::TightenedConstraints;
use crate::ltv::{linearize_along, ReferenceTrajectory};
use crate::model::{Model, OutputMap};
use crate::qp::{QpProblem, QpSettings};
use crate::sets::Interval;

/// `ℓ = Σ rate·‖u_i − u_{i−1}‖² + Σ_j input[j]·u_{i,j}²`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostWeights {
    pub rate: f64,
    pub input: Vec<f64>,
}

impl CostWeights {
    /// Input-rate penalty plus `5 β²` on the cooling load.
    pub fn ftms() -> Self {
        Self {
            rate: 1.0,
            input: vec![0.0, 5.0],
        }
    }
}

/// Stage cost summed over `inputs`, with `previous` standing in for `u_{−1}`.
pub fn evaluate_cost(inputs: &[DVector<f64>], previous: &DVector<f64>, weights: &CostWeights) -> f64 {
    let mut cost = 0.0;
    let mut last = previous;
    for u in inputs {
        cost += weights.rate * (u - last).norm_squared();
        cost += u.iter().zip(&weights.input).map(|(u, w)| w * u * u).sum::<f64>();
        last = u;
    }
    cost
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SlSettings {
    /// Trust-region radius on each state, as a fraction of its constraint width.
    pub state_trust_fraction: f64,
    /// Absolute trust-region radius on each input.
    pub input_trust_radius: f64,
    pub tol_cost: f64,
    pub tol_dyn: f64,
    pub max_iterations: usize,
    /// Exact-penalty weight relative to the largest objective curvature.
    pub penalty_factor: f64,
    /// Fraction of each tightened output interval kept clear in the
    /// subproblem, absorbing linearization error near the boundary.
    pub output_backoff: f64,
    /// Proximal weight on input deviations when there is no objective.
    pub proximal_weight: f64,
    pub qp_tolerance: f64,
    pub qp_max_iterations: usize,
}

impl Default for SlSettings {
    fn default() -> Self {
        Self {
            state_trust_fraction: 0.1,
            input_trust_radius: 0.2,
            tol_cost: 1e-6,
            tol_dyn: 1e-6,
            max_iterations: 30,
            penalty_factor: 1e4,
            output_backoff: 1e-4,
            proximal_weight: 1e-4,
            qp_tolerance: 1e-9,
            qp_max_iterations: 100,
        }
    }
}

impl SlSettings {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("state_trust_fraction", self.state_trust_fraction),
            ("input_trust_radius", self.input_trust_radius),
            ("tol_cost", self.tol_cost),
            ("tol_dyn", self.tol_dyn),
            ("penalty_factor", self.penalty_factor),
            ("qp_tolerance", self.qp_tolerance),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::Config(format!("solver setting {name} must be positive")));
        }
        if !(0.0..0.5).contains(&self.output_backoff) || self.proximal_weight < 0.0 {
            return Err(Error::Config("output_backoff must lie in [0, 0.5) and proximal_weight be nonnegative".into()));
        }
        if self.max_iterations == 0 || self.qp_max_iterations == 0 {
            return Err(Error::Config("iteration limits must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolverStatus {
    Converged,
    MaxIters,
    QpFailure,
}

impl SolverStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            SolverStatus::Converged => "converged",
            SolverStatus::MaxIters => "max-iters",
            SolverStatus::QpFailure => "qp-failure",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverReport {
    pub status: SolverStatus,
    /// Number of QP subproblems solved.
    pub iterations: usize,
    /// Unpenalized objective of the returned trajectory.
    pub cost: f64,
    /// Largest per-step dynamics defect of the returned trajectory.
    pub defect: f64,
    /// Largest virtual-control magnitude in the last subproblem.
    pub virtual_control: f64,
    /// Summed per-stage scaled output violation of the returned trajectory.
    pub output_violation: f64,
    pub solve_time: f64,
}

/// One instance of the nominal problem from step `start_step` to the end.
pub struct OcpInstance<'a> {
    pub model: &'a dyn Model,
    pub output: &'a OutputMap,
    /// Tightened sets for `start_step..=N`.
    pub constraints: &'a TightenedConstraints,
    /// State box used to size the state trust region.
    pub state_box: &'a Interval,
    pub x0: DVector<f64>,
    pub start_step: usize,
    /// Disturbance references for `start_step..N`.
    pub d_ref: &'a [DVector<f64>],
    /// `None` turns the problem into a pure feasibility search.
    pub objective: Option<&'a CostWeights>,
    pub u_prev: DVector<f64>,
}

/// Row bounds of one stage after backoff, with per-row scales.
struct StageRows {
    rows: Vec<usize>,
    lo: Vec<f64>,
    hi: Vec<f64>,
    scale: Vec<f64>,
}

struct Layout {
    nx: usize,
    nu: usize,
    block: usize,
    n: usize,
}

impl Layout {
    fn u(&self, i: usize) -> usize {
        i * self.block
    }
    /// Output slack of stage `i`; the terminal stage has its own slot.
    fn tau(&self, i: usize) -> usize {
        if i == self.n {
            i * self.block
        } else {
            i * self.block + self.nu
        }
    }
    fn sigma(&self, i: usize) -> usize {
        i * self.block + self.nu + 1
    }
    /// Scaled state deviation at stage `i ≥ 1`.
    fn x(&self, i: usize) -> usize {
        (i - 1) * self.block + self.nu + 1 + self.nx
    }
    fn len(&self) -> usize {
        self.n * self.block + 1
    }
}

impl<'a> OcpInstance<'a> {
    fn horizon(&self) -> usize {
        self.d_ref.len()
    }

    fn check(&self, init: &ReferenceTrajectory) -> Result<()> {
        let n = self.horizon();
        if n == 0 || init.len() != n || init.start_step() != self.start_step {
            return Err(Error::DimensionMismatch {
                context: "optimizer initial guess against horizon",
                expected: n,
                found: init.len(),
            });
        }
        if self.start_step + n != self.output.horizon() || self.constraints.sets.len() != n + 1 {
            return Err(Error::DimensionMismatch {
                context: "optimizer constraints against horizon",
                expected: n + 1,
                found: self.constraints.sets.len(),
            });
        }
        if self.constraints.start_step != self.start_step {
            return Err(Error::InvalidArgument("tightened constraints start at a different step".into()));
        }
        Ok(())
    }

    fn stage_rows(&self, backoff: f64) -> Vec<StageRows> {
        let n = self.horizon();
        (0..=n)
            .map(|i| {
                let step = self.start_step + i;
                let set = &self.constraints.sets[i];
                let original = self.output.set(step);
                let d = self.output.d(step);
                let mut out = StageRows {
                    rows: Vec::new(),
                    lo: Vec::new(),
                    hi: Vec::new(),
                    scale: Vec::new(),
                };
                for r in 0..self.output.n_y(step) {
                    // at the first stage the state is fixed, so pure state rows are constant
                    if i == 0 && d.row(r).iter().all(|&v| v == 0.0) {
                        continue;
                    }
                    let (lo, hi) = (set.lower()[r], set.upper()[r]);
                    let margin = if set.is_empty() { 0.0 } else { backoff * (hi - lo) };
                    let width = original.upper()[r] - original.lower()[r];
                    out.rows.push(r);
                    out.lo.push(lo + margin);
                    out.hi.push(hi - margin);
                    out.scale.push(if width > 0.0 { 0.1 * width } else { 1.0 });
                }
                out
            })
            .collect()
    }

    /// Per-stage scaled violations of the backed-off output sets.
    fn violations(&self, traj: &ReferenceTrajectory, stages: &[StageRows]) -> Vec<f64> {
        let n = self.horizon();
        stages
            .iter()
            .enumerate()
            .map(|(i, st)| {
                let step = self.start_step + i;
                let u = if i < n { Some(&traj.inputs()[i]) } else { None };
                let y = self.output.output(step, &traj.states()[i], u);
                st.rows
                    .iter()
                    .enumerate()
                    .map(|(j, &r)| {
                        let v = (y[r] - st.hi[j]).max(st.lo[j] - y[r]).max(0.0);
                        v / st.scale[j]
                    })
                    .fold(0.0, f64::max)
            })
            .collect()
    }

    fn cost(&self, inputs: &[DVector<f64>]) -> f64 {
        self.objective.map_or(0.0, |w| evaluate_cost(inputs, &self.u_prev, w))
    }
}

struct Evaluated {
    traj: ReferenceTrajectory,
    cost: f64,
    violation: f64,
}

/// Solves the nominal problem from `init`, which supplies the starting input
/// sequence. Subproblem failures and non-convergence are reported through
/// the status, not as errors; errors are reserved for malformed instances and
/// an initial guess whose rollout cannot be evaluated.
pub fn solve_problem2(
    inst: &OcpInstance<'_>,
    init: &ReferenceTrajectory,
    settings: &SlSettings,
) -> Result<(ReferenceTrajectory, SolverReport)> {
    let started = Instant::now();
    inst.check(init)?;
    let sig = inst.model.signature();
    let n = inst.horizon();
    let layout = Layout {
        nx: sig.n_x,
        nu: sig.n_u,
        block: sig.n_u + 1 + 2 * sig.n_x,
        n,
    };
    let rho_x: Vec<f64> = (0..sig.n_x)
        .map(|r| {
            let w = inst.state_box.upper()[r] - inst.state_box.lower()[r];
            settings.state_trust_fraction * if w > 0.0 { w } else { 1.0 }
        })
        .collect();
    let rho_u = settings.input_trust_radius;
    let stages = inst.stage_rows(settings.output_backoff);

    let evaluate = |inputs: Vec<DVector<f64>>| -> Result<Evaluated> {
        let traj = ReferenceTrajectory::rollout(inst.model, inst.start_step, inst.x0.clone(), inputs, inst.d_ref.to_vec())?;
        let cost = inst.cost(traj.inputs());
        let violation = inst.violations(&traj, &stages).iter().sum();
        Ok(Evaluated { traj, cost, violation })
    };

    // Hessian of the objective in scaled input deviations.
    let (rate, input_w): (f64, Vec<f64>) = match inst.objective {
        Some(w) => (w.rate, w.input.clone()),
        None => (0.0, vec![0.0; sig.n_u]),
    };
    let prox = if inst.objective.is_none() { settings.proximal_weight } else { 0.0 };
    let curvature = (0..sig.n_u)
        .map(|j| (4.0 * rate + 2.0 * input_w.get(j).copied().unwrap_or(0.0) + 2.0 * prox) * rho_u * rho_u)
        .fold(0.0, f64::max);
    let penalty = settings.penalty_factor * curvature.max(1.0);
    let merit = |e: &Evaluated| e.cost + penalty * e.violation;

    let mut current = evaluate(init.inputs().to_vec())?;
    let mut status = SolverStatus::MaxIters;
    let mut iterations = 0;
    let mut virtual_control = 0.0;
    let qp_settings = QpSettings {
        tolerance: settings.qp_tolerance,
        max_iterations: settings.qp_max_iterations,
        ..QpSettings::default()
    };

    while iterations < settings.max_iterations {
        let ltv = match linearize_along(inst.model, &current.traj) {
            Ok(l) => l,
            Err(_) => {
                status = SolverStatus::QpFailure;
                break;
            }
        };
        let mut qp = QpProblem::new(layout.len());
        let u = current.traj.inputs();

        // objective: exact quadratic expansion of ℓ around U
        for i in 0..n {
            let prev = if i == 0 { &inst.u_prev } else { &u[i - 1] };
            for j in 0..sig.n_u {
                let wj = input_w.get(j).copied().unwrap_or(0.0);
                let mut grad = 2.0 * wj * u[i][j] + 2.0 * rate * (u[i][j] - prev[j]);
                let mut diag = 2.0 * wj + 2.0 * rate + 2.0 * prox;
                if i + 1 < n {
                    grad -= 2.0 * rate * (u[i + 1][j] - u[i][j]);
                    diag += 2.0 * rate;
                    if rate != 0.0 {
                        qp.add_hessian(layout.u(i + 1) + j, layout.u(i) + j, -2.0 * rate * rho_u * rho_u);
                    }
                }
                qp.add_hessian(layout.u(i) + j, layout.u(i) + j, diag * rho_u * rho_u);
                qp.add_gradient(layout.u(i) + j, grad * rho_u);
                qp.set_bounds(layout.u(i) + j, -1.0, 1.0);
            }
            for r in 0..sig.n_x {
                qp.add_gradient(layout.sigma(i) + r, penalty);
                qp.set_bounds(layout.sigma(i) + r, 0.0, f64::INFINITY);
                qp.set_bounds(layout.x(i + 1) + r, -1.0, 1.0);
            }
        }
        for i in 0..=n {
            qp.add_gradient(layout.tau(i), penalty);
            qp.set_bounds(layout.tau(i), 0.0, f64::INFINITY);
        }

        // relaxed linearized dynamics
        for i in 0..n {
            let (a, b) = (&ltv.a[i], &ltv.b[i]);
            for r in 0..sig.n_x {
                let mut row = Vec::with_capacity(2 * sig.n_x + sig.n_u + 1);
                if i > 0 {
                    for c in 0..sig.n_x {
                        if a[(r, c)] != 0.0 {
                            row.push((layout.x(i) + c, -a[(r, c)] * rho_x[c] / rho_x[r]));
                        }
                    }
                }
                for j in 0..sig.n_u {
                    if b[(r, j)] != 0.0 {
                        row.push((layout.u(i) + j, -b[(r, j)] * rho_u / rho_x[r]));
                    }
                }
                row.push((layout.x(i + 1) + r, 1.0));
                let mut upper = row.clone();
                upper.push((layout.sigma(i) + r, -1.0));
                let mut lower: Vec<(usize, f64)> = row.iter().map(|&(c, v)| (c, -v)).collect();
                lower.push((layout.sigma(i) + r, -1.0));
                qp.add_constraint(upper, f64::NEG_INFINITY, 0.0);
                qp.add_constraint(lower, f64::NEG_INFINITY, 0.0);
            }
        }

        // relaxed output constraints
        for (i, st) in stages.iter().enumerate() {
            let step = inst.start_step + i;
            let (cm, dm) = (inst.output.c(step), inst.output.d(step));
            let uu = if i < n { Some(&u[i]) } else { None };
            let y = inst.output.output(step, &current.traj.states()[i], uu);
            for (j, &r) in st.rows.iter().enumerate() {
                let s = st.scale[j];
                let mut row = Vec::new();
                if i > 0 {
                    for c in 0..sig.n_x {
                        if cm[(r, c)] != 0.0 {
                            row.push((layout.x(i) + c, cm[(r, c)] * rho_x[c] / s));
                        }
                    }
                }
                if i < n {
                    for c in 0..sig.n_u {
                        if dm[(r, c)] != 0.0 {
                            row.push((layout.u(i) + c, dm[(r, c)] * rho_u / s));
                        }
                    }
                }
                let mut upper = row.clone();
                upper.push((layout.tau(i), -1.0));
                let mut lower: Vec<(usize, f64)> = row.iter().map(|&(c, v)| (c, -v)).collect();
                lower.push((layout.tau(i), -1.0));
                qp.add_constraint(upper, f64::NEG_INFINITY, (st.hi[j] - y[r]) / s);
                qp.add_constraint(lower, f64::NEG_INFINITY, (y[r] - st.lo[j]) / s);
            }
        }

        iterations += 1;
        let sol = match qp.solve(&qp_settings) {
            Ok(sol) => sol,
            Err(_) => {
                status = SolverStatus::QpFailure;
                break;
            }
        };
        let z = &sol.z;
        virtual_control = (0..n)
            .flat_map(|i| (0..sig.n_x).map(move |r| (i, r)))
            .map(|(i, r)| z[layout.sigma(i) + r] * rho_x[r])
            .fold(0.0, f64::max);

        let step: Vec<DVector<f64>> = (0..n)
            .map(|i| DVector::from_fn(sig.n_u, |j, _| z[layout.u(i) + j] * rho_u))
            .collect();
        let slack_sum: f64 = (0..n)
            .flat_map(|i| (0..sig.n_x).map(move |r| (i, r)))
            .map(|(i, r)| z[layout.sigma(i) + r])
            .sum::<f64>()
            + (0..=n).map(|i| z[layout.tau(i)]).sum::<f64>();
        let stepped: Vec<DVector<f64>> = u.iter().zip(&step).map(|(u, d)| u + d).collect();
        let model_cost = inst.cost(&stepped);
        let predicted = merit(&current) - (model_cost + penalty * slack_sum);

        if predicted <= settings.tol_cost {
            status = if current.violation <= 1e-12 {
                SolverStatus::Converged
            } else {
                SolverStatus::MaxIters
            };
            break;
        }

        let trust_active = z
            .iter()
            .enumerate()
            .any(|(idx, v)| {
                let off = idx % layout.block;
                idx < n * layout.block && (off < sig.n_u || off >= sig.n_u + 1 + sig.n_x) && v.abs() > 1.0 - 1e-6
            });

        // backtracking on the merit
        let base = merit(&current);
        let mut t = 1.0;
        let mut accepted = None;
        while t >= 1.0 / 1024.0 {
            let trial: Vec<DVector<f64>> = u.iter().zip(&step).map(|(u, d)| u + d * t).collect();
            if let Ok(e) = evaluate(trial) {
                let m = merit(&e);
                if m <= base - 1e-4 * t * predicted {
                    accepted = Some((e, m, t));
                    break;
                }
            }
            t *= 0.5;
        }
        let Some((next, next_merit, t)) = accepted else {
            status = SolverStatus::MaxIters;
            break;
        };
        let actual = base - next_merit;
        current = next;
        if current.violation <= 1e-12 {
            // full step on an exact model with an inactive trust region is the
            // subproblem optimum of the true problem
            let exact_model = t == 1.0 && (actual - predicted).abs() <= settings.tol_cost && !trust_active;
            if exact_model || actual.abs() <= settings.tol_cost {
                status = SolverStatus::Converged;
                break;
            }
        }
    }

    let defect = current.traj.dynamics_defect(inst.model)?;
    if status == SolverStatus::Converged && defect > settings.tol_dyn {
        status = SolverStatus::MaxIters;
    }
    let report = SolverReport {
        status,
        iterations,
        cost: current.cost,
        defect,
        virtual_control,
        output_violation: current.violation,
        solve_time: started.elapsed().as_secs_f64(),
    };
    Ok((current.traj, report))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(x)
    }

    #[test]
    fn constant_inputs_without_beta_cost_nothing() {
        let w = CostWeights::ftms();
        let u = vec![v(&[0.4, 0.0]); 5];
        assert_eq!(evaluate_cost(&u, &v(&[0.4, 0.0]), &w), 0.0);
    }

    #[test]
    fn single_step_cost_by_hand() {
        let w = CostWeights::ftms();
        let c = evaluate_cost(&[v(&[0.1, 0.2])], &v(&[0.0, 0.0]), &w);
        assert!((c - 0.25).abs() < 1e-15);
    }
}
