//! CSV and JSON artifacts.
//!
//! Floats are written with Rust's shortest round-trip formatting, so every
//! value reads back bit-exact and identical runs give identical files.
//! Wall-clock timings never go into CSV files.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::error_sets::ErrorSets;
use crate::ltv::ReferenceTrajectory;
use crate::sim::{ClosedLoopLog, Containment, MonteCarloSummary};

fn fmt(v: f64) -> String {
    format!("{v}")
}

fn parse_f64(field: &str, line: u64) -> Result<f64> {
    field
        .trim()
        .parse()
        .map_err(|_| Error::InvalidArgument(format!("line {line}: '{field}' is not a number")))
}

fn indexed(prefix: &str, n: usize) -> impl Iterator<Item = String> + '_ {
    (0..n).map(move |i| format!("{prefix}{i}"))
}

/// Writes `k, xr_*, ur_*, dr_*`, one row per step. The final row holds the
/// terminal state with empty input and disturbance fields.
pub fn write_trajectory<W: Write>(traj: &ReferenceTrajectory, out: W) -> Result<()> {
    let (nx, nu, nd) = (
        traj.states()[0].len(),
        traj.inputs()[0].len(),
        traj.disturbances()[0].len(),
    );
    let mut w = csv::Writer::from_writer(out);
    let header: Vec<String> = std::iter::once("k".to_string())
        .chain(indexed("xr_", nx))
        .chain(indexed("ur_", nu))
        .chain(indexed("dr_", nd))
        .collect();
    w.write_record(&header)?;
    for (i, x) in traj.states().iter().enumerate() {
        let mut row = vec![(traj.start_step() + i).to_string()];
        row.extend(x.iter().map(|v| fmt(*v)));
        match (traj.inputs().get(i), traj.disturbances().get(i)) {
            (Some(u), Some(d)) => {
                row.extend(u.iter().map(|v| fmt(*v)));
                row.extend(d.iter().map(|v| fmt(*v)));
            }
            _ => row.extend(std::iter::repeat_n(String::new(), nu + nd)),
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_trajectory<R: std::io::Read>(input: R) -> Result<ReferenceTrajectory> {
    let mut r = csv::Reader::from_reader(input);
    let header = r.headers()?.clone();
    let count = |prefix: &str| header.iter().filter(|h| h.starts_with(prefix)).count();
    let (nx, nu, nd) = (count("xr_"), count("ur_"), count("dr_"));
    let expected: Vec<String> = std::iter::once("k".to_string())
        .chain(indexed("xr_", nx))
        .chain(indexed("ur_", nu))
        .chain(indexed("dr_", nd))
        .collect();
    if header.iter().ne(expected.iter().map(String::as_str)) || nx == 0 {
        return Err(Error::InvalidArgument(
            "trajectory header must be k, xr_*, ur_*, dr_* in order".into(),
        ));
    }
    let (mut xs, mut us, mut ds) = (Vec::new(), Vec::new(), Vec::new());
    let mut start = None;
    let mut terminal_seen = false;
    for rec in r.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        if terminal_seen {
            return Err(Error::InvalidArgument(format!("line {line}: rows after the terminal state")));
        }
        let k: usize = rec[0]
            .trim()
            .parse()
            .map_err(|_| Error::InvalidArgument(format!("line {line}: bad step index")))?;
        let first = *start.get_or_insert(k);
        if k != first + xs.len() {
            return Err(Error::InvalidArgument(format!("line {line}: step indices must be consecutive")));
        }
        let field = |j: usize| parse_f64(&rec[j], line);
        xs.push(DVector::from_iterator(nx, (1..=nx).map(field).collect::<Result<Vec<_>>>()?));
        if rec.iter().skip(1 + nx).all(|f| f.trim().is_empty()) {
            terminal_seen = true;
            continue;
        }
        us.push(DVector::from_iterator(nu, (1 + nx..1 + nx + nu).map(field).collect::<Result<Vec<_>>>()?));
        ds.push(DVector::from_iterator(
            nd,
            (1 + nx + nu..1 + nx + nu + nd).map(field).collect::<Result<Vec<_>>>()?,
        ));
    }
    if !terminal_seen {
        return Err(Error::InvalidArgument("trajectory has no terminal state row".into()));
    }
    ReferenceTrajectory::new(start.unwrap_or(0), xs, us, ds)
}

pub fn save_trajectory(traj: &ReferenceTrajectory, path: &Path) -> Result<()> {
    write_trajectory(traj, File::create(path)?)
}

pub fn load_trajectory(path: &Path) -> Result<ReferenceTrajectory> {
    read_trajectory(File::open(path)?)
}

/// Per-step closed-loop log. Row `k = N` carries the terminal state only.
pub fn write_log<W: Write>(log: &ClosedLoopLog, out: W) -> Result<()> {
    let nx = log.states[0].len();
    let nu = log.records.first().map_or(0, |r| r.input.len());
    let nd = log.records.first().map_or(0, |r| r.d_ref.len());
    let mut w = csv::Writer::from_writer(out);
    let header: Vec<String> = ["k", "t"]
        .into_iter()
        .map(String::from)
        .chain(indexed("x_", nx))
        .chain(indexed("u_", nu))
        .chain(indexed("d_ref_", nd))
        .chain(indexed("d_offset_", nd))
        .chain(
            ["mode", "iterations", "qp_iterations", "status", "clamped", "cost_to_date"]
                .into_iter()
                .map(String::from),
        )
        .collect();
    w.write_record(&header)?;
    let tail = 2 * nd + nu + 6;
    for (k, x) in log.states.iter().enumerate() {
        let mut row = vec![k.to_string(), fmt(k as f64 * log.sample_time)];
        row.extend(x.iter().map(|v| fmt(*v)));
        match log.records.get(k) {
            Some(r) => {
                row.extend(r.input.iter().map(|v| fmt(*v)));
                row.extend(r.d_ref.iter().map(|v| fmt(*v)));
                row.extend(r.d_offset.iter().map(|v| fmt(*v)));
                row.push(r.mode.as_str().into());
                row.push(r.iterations.to_string());
                row.push(r.qp_iterations.to_string());
                row.push(r.status.map_or("", |s| s.as_str()).into());
                row.push(u8::from(r.clamped).to_string());
                row.push(fmt(r.cost_to_date));
            }
            None => row.extend(std::iter::repeat_n(String::new(), tail)),
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Error-set bounds next to the realized error, one row per step.
pub fn write_error_sets<W: Write>(
    errors: &ErrorSets,
    reference: &ReferenceTrajectory,
    states: &[DVector<f64>],
    out: W,
) -> Result<()> {
    let nx = reference.states()[0].len();
    let mut w = csv::Writer::from_writer(out);
    let header: Vec<String> = std::iter::once("k".to_string())
        .chain(indexed("e_lo_", nx))
        .chain(indexed("e_hi_", nx))
        .chain(indexed("e_", nx))
        .collect();
    w.write_record(&header)?;
    for (i, set) in errors.errors.iter().enumerate() {
        let k = errors.start_step + i;
        let mut row = vec![k.to_string()];
        row.extend(set.lower().iter().map(|v| fmt(*v)));
        row.extend(set.upper().iter().map(|v| fmt(*v)));
        match (states.get(k), reference.state_at(k)) {
            (Some(x), Ok(xr)) => row.extend((x - xr).iter().map(|v| fmt(*v))),
            _ => row.extend(std::iter::repeat_n(String::new(), nx)),
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimingStats {
    pub mean: f64,
    pub p50: f64,
    pub p90: f64,
    pub max: f64,
}

impl TimingStats {
    pub fn from_samples(samples: &[f64]) -> Self {
        if samples.is_empty() {
            return Self {
                mean: 0.0,
                p50: 0.0,
                p90: 0.0,
                max: 0.0,
            };
        }
        let mut s = samples.to_vec();
        s.sort_by(f64::total_cmp);
        let pick = |q: f64| s[((q * (s.len() - 1) as f64).round() as usize).min(s.len() - 1)];
        Self {
            mean: s.iter().sum::<f64>() / s.len() as f64,
            p50: pick(0.5),
            p90: pick(0.9),
            max: s[s.len() - 1],
        }
    }
}

/// Machine-readable digest of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub name: String,
    pub mode: String,
    pub disturbance: String,
    pub seed: u64,
    pub sample_time: f64,
    pub steps: usize,
    pub objective: f64,
    pub equalized_objective: f64,
    pub violation_steps: usize,
    pub row_violations: Vec<usize>,
    pub optimized_steps: usize,
    pub converged_steps: usize,
    pub success_rate: f64,
    pub clamp_count: usize,
    pub iterations: Vec<usize>,
    pub containment_outside_steps: Option<usize>,
    pub containment_tightness: Option<Vec<f64>>,
    pub failure: Option<String>,
    pub solve_time: TimingStats,
}

impl RunSummary {
    pub fn from_log(name: &str, log: &ClosedLoopLog) -> Self {
        let times: Vec<f64> = log.records.iter().map(|r| r.solve_time).collect();
        Self {
            name: name.to_string(),
            mode: log.mode.as_str().into(),
            disturbance: log.realization.kind.as_str().into(),
            seed: log.realization.seed,
            sample_time: log.sample_time,
            steps: log.records.len(),
            objective: log.objective,
            equalized_objective: log.equalized_objective,
            violation_steps: log.violation_steps,
            row_violations: log.row_violations.clone(),
            optimized_steps: log.optimized_steps,
            converged_steps: log.converged_steps,
            success_rate: log.success_rate(),
            clamp_count: log.clamp_count,
            iterations: log.records.iter().map(|r| r.iterations).collect(),
            containment_outside_steps: log.containment.as_ref().map(|c| c.outside_steps),
            containment_tightness: log.containment.as_ref().map(|c: &Containment| c.tightness.clone()),
            failure: log.failure.clone(),
            solve_time: TimingStats::from_samples(&times),
        }
    }
}

/// Digest of a Monte Carlo batch.
#[derive(Debug, Clone, Serialize)]
pub struct BatchSummary {
    pub name: String,
    pub aggregate: MonteCarloSummary,
    pub runs: Vec<RunSummary>,
}

pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    std::fs::write(path, text + "\n")?;
    Ok(())
}
