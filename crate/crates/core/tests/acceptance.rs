//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero when any criterion fails.

mod common;

use std::path::{Path, PathBuf};
use std::time::Instant;

use common::ocp::{fixed_plant, random_plant, random_weights, solver_and_oracle_cost};
use common::remainder::{exact_remainder, random_zonotope};
use common::{random_case, to_problem, vertex_support};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use shrinkmpc::config::{Scenario, ScenarioConfig};
use shrinkmpc::controller::ControlMode;
use shrinkmpc::error_sets::lagrange_remainder_bound;
use shrinkmpc::io::write_log;
use shrinkmpc::ltv::{lqr_gains, LqrWeights};
use shrinkmpc::model::ftms::{FtmsModel, FtmsParams};
use shrinkmpc::optimizer::CostWeights;
use shrinkmpc::qp::QpSettings;
use shrinkmpc::sets::{Interval, Zonotope};
use shrinkmpc::sim::{
    fallback_alternation_study, run_monte_carlo, uniform_realizations, ClosedLoopLog, DisturbanceRealization,
    RealizationKind,
};

type Outcome = Result<String, String>;

const TEMPERATURE_ROW: usize = 2;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn load(name: &str) -> Result<(ScenarioConfig, Scenario), String> {
    let cfg = ScenarioConfig::load(&configs_dir().join(name), &[]).map_err(|e| format!("{name}: {e}"))?;
    let scenario = cfg.build().map_err(|e| format!("{name}: {e}"))?;
    Ok((cfg, scenario))
}

fn run_configured(cfg: &ScenarioConfig, scenario: &Scenario) -> Result<ClosedLoopLog, String> {
    let initial = scenario.generate_initial().map_err(|e| e.to_string())?;
    let log = scenario
        .factory(initial)
        .run(&cfg.realization(), scenario.sample_time)
        .map_err(|e| e.to_string())?;
    match &log.failure {
        Some(f) => Err(format!("run failed: {f}")),
        None => Ok(log),
    }
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
}

/// Runs shared by the robust-satisfaction and iteration-budget criteria.
struct TestCase1 {
    robust: Result<ClosedLoopLog, String>,
}

fn robust_satisfaction(tc1: &TestCase1) -> Outcome {
    let log = tc1.robust.as_ref().map_err(|e| format!("test case 1: {e}"))?;
    ensure(log.violation_steps == 0, || format!("test case 1 violated constraints at {} steps", log.violation_steps))?;

    let (cfg, scenario) = load("robust_montecarlo.toml")?;
    let initial = scenario.generate_initial().map_err(|e| e.to_string())?;
    let realizations = uniform_realizations(cfg.montecarlo.base_seed, 20);
    let report = run_monte_carlo(&scenario.factory(initial), &realizations, scenario.sample_time)
        .map_err(|e| e.to_string())?;
    let s = &report.summary;
    ensure(s.failed_runs == 0, || format!("{} uniform runs failed", s.failed_runs))?;
    ensure(s.total_violation_steps == 0, || {
        format!("{} violation steps over {} uniform runs", s.total_violation_steps, s.runs_with_violations)
    })?;
    Ok(format!("test case 1 and 20 uniform runs, 0 violations (mean success {:.2})", s.mean_success_rate))
}

fn fallback_soundness() -> Outcome {
    let (cfg, scenario) = load("fallback_montecarlo.toml")?;
    let initial = scenario.generate_initial().map_err(|e| e.to_string())?;
    let mut factory = scenario.factory(initial);
    factory.mode = ControlMode::FallbackOnly;
    let mut realizations = uniform_realizations(cfg.montecarlo.base_seed, 20);
    realizations.push(DisturbanceRealization::new(RealizationKind::ConstantHigh, 0, 0.0));
    realizations.push(DisturbanceRealization::new(RealizationKind::ConstantLow, 0, 0.0));
    let report = run_monte_carlo(&factory, &realizations, scenario.sample_time).map_err(|e| e.to_string())?;
    let s = &report.summary;
    ensure(s.failed_runs == 0, || format!("{} runs failed", s.failed_runs))?;
    ensure(s.containment_checked == 22 && s.contained_runs == 22, || {
        format!("{}/{} runs contained", s.contained_runs, s.containment_checked)
    })?;
    let mut extreme_tightness = Vec::new();
    for log in &report.logs[20..] {
        let t = &log.containment.as_ref().expect("checked").tightness;
        let best = t.iter().copied().fold(0.0, f64::max);
        ensure(best >= 0.5, || format!("{} run reaches tightness {best:.3}", log.realization.kind.as_str()))?;
        extreme_tightness.push(best);
    }
    Ok(format!("22/22 runs contained, extreme tightness {:.4}/{:.4}", extreme_tightness[0], extreme_tightness[1]))
}

fn nominal_failure() -> Outcome {
    let (cfg, scenario) = load("nominal_testcase1.toml")?;
    let log = run_configured(&cfg, &scenario)?;
    let count = log.row_violations.get(TEMPERATURE_ROW).copied().unwrap_or(0);
    ensure(count >= 1, || "nominal controller kept the temperature bound".into())?;
    let first = log.states.iter().position(|x| {
        let (lo, hi) = cfg.model.params.temperature_bounds;
        x[TEMPERATURE_ROW] < lo || x[TEMPERATURE_ROW] > hi
    });
    Ok(format!(
        "{count} temperature violations, first at t = {} s",
        first.map_or("-".into(), |k| format!("{}", k as f64 * scenario.sample_time))
    ))
}

fn objective_ordering() -> Outcome {
    let (cfg, scenario) = load("fallback_study.toml")?;
    let initial = scenario.generate_initial().map_err(|e| e.to_string())?;
    let (study, _) = fallback_alternation_study(&scenario.factory(initial), &cfg.realization(), scenario.sample_time)
        .map_err(|e| e.to_string())?;
    let detail = format!(
        "normalized objectives 1 / {:.4} / {:.4}",
        study.normalized[1], study.normalized[2]
    );
    ensure(study.ordering_holds, || format!("ordering broken, {detail}"))?;
    ensure(study.fallback_ratio > 1.2, || format!("fallback ratio too small, {detail}"))?;
    Ok(detail)
}

fn set_algebra() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(500);
    // opening property of the interval Pontryagin difference
    for case in 0..200 {
        let n = rng.random_range(1..=5);
        let lo = DVector::from_fn(n, |_, _| rng.random_range(-50.0..50.0));
        let width = DVector::from_fn(n, |_, _| rng.random_range(0.0..40.0));
        let hi = &lo + &width;
        let a = Interval::new(lo.clone(), hi.clone()).map_err(|e| e.to_string())?;
        let b = Interval::symmetric(width.map(|w| 0.5 * w * rng.random_range(0.0..1.0))).map_err(|e| e.to_string())?;
        let back = a.pontryagin_diff(&b).and_then(|d| d.minkowski_sum(&b)).map_err(|e| e.to_string())?;
        for i in 0..n {
            ensure(close(back.lower()[i], lo[i], 1e-14) && close(back.upper()[i], hi[i], 1e-14), || {
                format!("opening property fails in case {case}, axis {i}")
            })?;
        }
    }
    // support function oracles
    let random_zono = |rng: &mut ChaCha8Rng, n: usize| {
        let ng = rng.random_range(0..=5);
        Zonotope::new(
            DVector::from_fn(n, |_, _| rng.random_range(-10.0..10.0)),
            DMatrix::from_fn(n, ng, |_, _| rng.random_range(-3.0..3.0)),
        )
        .expect("consistent dimensions")
    };
    for case in 0..200 {
        let a = random_zono(&mut rng, 3);
        let b = random_zono(&mut rng, 3);
        let m = DMatrix::from_fn(2, 3, |_, _| rng.random_range(-2.0..2.0));
        let d3 = DVector::from_fn(3, |_, _| rng.random_range(-2.0..2.0));
        let d2 = DVector::from_fn(2, |_, _| rng.random_range(-2.0..2.0));
        let sum = a.minkowski_sum(&b).map_err(|e| e.to_string())?;
        let image = a.linear_map(&m).map_err(|e| e.to_string())?;
        ensure(close(sum.support(&d3), vertex_support(&sum, &d3), 1e-10), || format!("Minkowski support, case {case}"))?;
        ensure(close(sum.support(&d3), a.support(&d3) + b.support(&d3), 1e-10), || format!("support additivity, case {case}"))?;
        ensure(close(image.support(&d2), vertex_support(&image, &d2), 1e-10), || format!("linear map support, case {case}"))?;
        ensure(close(image.support(&d2), a.support(&(m.transpose() * &d2)), 1e-10), || format!("transpose support, case {case}"))?;
    }
    // interval-hull membership
    for case in 0..200 {
        let n = rng.random_range(1..=5);
        let z = random_zono(&mut rng, n);
        let hull = z.interval_hull();
        for _ in 0..1000 {
            let t = DVector::from_fn(z.num_generators(), |_, _| rng.random_range(-1.0..=1.0));
            ensure(hull.contains(&z.sample(&t)), || format!("hull misses a sample in case {case}"))?;
        }
    }
    Ok("opening, support and hull checks on 200 cases each".into())
}

fn remainder_soundness() -> Outcome {
    let model = FtmsModel::new(FtmsParams::default(), 100.0).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(600);
    let mut worst: f64 = 0.0;
    for case in 0..50 {
        let z = random_zonotope(&mut rng);
        let bound = lagrange_remainder_bound(&model, &z).map_err(|e| e.to_string())?;
        for _ in 0..500 {
            let t = DVector::from_fn(z.num_generators(), |_, _| rng.random_range(-1.0..=1.0));
            let (rem, slack) = exact_remainder(&model, z.center(), &z.sample(&t));
            ensure(bound.contains_with_slack(&rem, slack), || format!("remainder escapes the bound in case {case}"))?;
            if bound.upper()[TEMPERATURE_ROW] > 0.0 {
                worst = worst.max(rem[TEMPERATURE_ROW].abs() / bound.upper()[TEMPERATURE_ROW]);
            }
        }
    }
    Ok(format!("50 x 500 samples bounded, largest temperature ratio {worst:.3}"))
}

fn lqr_oracle() -> Outcome {
    let w = LqrWeights::diagonal(&[1.0], &[2.0]).map_err(|e| e.to_string())?;
    let one = |v: f64| DMatrix::from_element(1, 1, v);
    let (k, p) = lqr_gains(&[one(2.0), one(2.0)], &[one(1.0), one(1.0)], &w).map_err(|e| e.to_string())?;
    let expected = [(p[0][(0, 0)], 105.0 / 17.0), (p[1][(0, 0)], 11.0 / 3.0), (k[0][(0, 0)], -22.0 / 17.0), (k[1][(0, 0)], -2.0 / 3.0)];
    for (got, want) in expected {
        ensure((got - want).abs() <= 1e-12, || format!("scalar recursion gives {got}, expected {want}"))?;
    }

    let scenario = ScenarioConfig::default().build().map_err(|e| e.to_string())?;
    let (_, assessment) = scenario.generate_initial().map_err(|e| e.to_string())?;
    for (i, p) in assessment.ltv.cost_to_go.iter().enumerate() {
        let scale = p.amax();
        ensure((p - p.transpose()).amax() <= 1e-12 * scale, || format!("P_{i} is not symmetric"))?;
        ensure(p.clone().symmetric_eigenvalues().min() >= -1e-10 * scale, || format!("P_{i} is indefinite"))?;
    }

    let doubles = [
        (DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0]), DMatrix::from_row_slice(2, 1, &[0.5, 1.0]), 1.0),
        (DMatrix::from_row_slice(2, 2, &[1.2, 0.0, 0.0, 0.5]), DMatrix::from_row_slice(2, 1, &[1.0, 0.0]), 0.1),
    ];
    for (a, b, r) in doubles {
        let w = LqrWeights::diagonal(&[1.0, 1.0], &[r]).map_err(|e| e.to_string())?;
        let (k, _) = lqr_gains(&vec![a.clone(); 80], &vec![b.clone(); 80], &w).map_err(|e| e.to_string())?;
        let mut e = DVector::from_element(2, 1.0);
        for gain in k.iter().take(50) {
            e = (&a + &b * gain) * e;
        }
        ensure(e.norm() < 1e-3 * 2f64.sqrt(), || format!("error norm {} after 50 steps", e.norm()))?;
    }
    Ok(format!("scalar example exact, {} cost-to-go matrices symmetric PSD, test doubles decay", assessment.ltv.cost_to_go.len()))
}

fn sl_qp_oracle() -> Outcome {
    let weights = CostWeights { rate: 1.0, input: vec![0.5] };
    let (cost, oracle) = solver_and_oracle_cost(&fixed_plant(), &weights, &DVector::from_vec(vec![0.8]));
    let mut worst_ocp = (cost - oracle).abs();
    let mut rng = ChaCha8Rng::seed_from_u64(800);
    let mut done = 0;
    while done < 10 {
        let Some(plant) = random_plant(&mut rng) else { continue };
        let (weights, u_prev) = random_weights(&mut rng);
        let (cost, oracle) = solver_and_oracle_cost(&plant, &weights, &u_prev);
        worst_ocp = worst_ocp.max((cost - oracle).abs());
        done += 1;
    }
    ensure(worst_ocp <= 1e-6, || format!("trajectory optimizer off by {worst_ocp:e}"))?;

    let mut worst_qp: f64 = 0.0;
    for case in 0..200 {
        let (dense, bounds) = random_case(&mut rng, case % 4 == 3);
        let (_, best) = dense.enumerate().ok_or("oracle found no feasible point")?;
        let sol = to_problem(&dense, &bounds).solve(&QpSettings::default()).map_err(|e| e.to_string())?;
        worst_qp = worst_qp.max((sol.objective - best).abs());
    }
    ensure(worst_qp <= 1e-7, || format!("QP objective off by {worst_qp:e}"))?;
    Ok(format!("largest cost gaps: trajectory {worst_ocp:.1e}, QP {worst_qp:.1e}"))
}

fn iteration_budget(tc1: &TestCase1) -> Outcome {
    let log = tc1.robust.as_ref().map_err(|e| format!("test case 1: {e}"))?;
    let rate = log.success_rate();
    ensure(rate >= 0.9, || format!("success at {:.0}% of steps", 100.0 * rate))?;
    Ok(format!("{}/{} steps succeeded with 20 iterations", log.optimized_steps, log.records.len()))
}

fn determinism() -> Outcome {
    let mut names: Vec<String> = std::fs::read_dir(configs_dir())
        .map_err(|e| e.to_string())?
        .filter_map(|e| e.ok())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .filter(|n| n.ends_with(".toml"))
        .collect();
    names.sort();
    for name in &names {
        let (cfg, scenario) = load(name)?;
        let csv = || -> Result<Vec<u8>, String> {
            let log = run_configured(&cfg, &scenario)?;
            let mut out = Vec::new();
            write_log(&log, &mut out).map_err(|e| e.to_string())?;
            Ok(out)
        };
        ensure(csv()? == csv()?, || format!("{name} produced different CSV on rerun"))?;
    }
    Ok(format!("{} bundled scenarios rerun byte-identical", names.len()))
}

fn main() {
    let started = Instant::now();
    let tc1 = TestCase1 {
        robust: load("testcase1.toml").and_then(|(cfg, scenario)| run_configured(&cfg, &scenario)),
    };
    let criteria: [(&str, &dyn Fn() -> Outcome); 10] = [
        ("robust constraint satisfaction", &|| robust_satisfaction(&tc1)),
        ("fallback soundness", &fallback_soundness),
        ("nominal failure witness", &nominal_failure),
        ("objective ordering", &objective_ordering),
        ("set algebra properties", &set_algebra),
        ("remainder bound soundness", &remainder_soundness),
        ("LQR oracle", &lqr_oracle),
        ("trajectory optimizer and QP oracles", &sl_qp_oracle),
        ("iteration budget", &|| iteration_budget(&tc1)),
        ("determinism", &determinism),
    ];
    let mut failures = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let (tag, detail) = match check() {
            Ok(detail) => ("PASS", detail),
            Err(detail) => {
                failures += 1;
                ("FAIL", detail)
            }
        };
        println!("[{tag}] {:>2}. {name}: {detail} ({:.1} s)", i + 1, t.elapsed().as_secs_f64());
    }
    println!(
        "{} of {} criteria passed in {:.1} s",
        criteria.len() - failures,
        criteria.len(),
        started.elapsed().as_secs_f64()
    );
    if failures > 0 {
        std::process::exit(1);
    }
}
