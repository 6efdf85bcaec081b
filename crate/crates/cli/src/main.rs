//! Scenario runner.
//!
//! Exit status: 0 on success (constraint violations are reported, not
//! fatal), 1 on runtime failure, 2 on an invalid configuration or command
//! line.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use shrinkmpc::config::{Scenario, ScenarioConfig};
use shrinkmpc::controller::{Assessment, ControlMode};
use shrinkmpc::io::{self, BatchSummary, RunSummary};
use shrinkmpc::ltv::ReferenceTrajectory;
use shrinkmpc::sim::{
    fallback_alternation_study, run_monte_carlo, uniform_realizations, ClosedLoopLog, DisturbanceRealization,
    RealizationKind,
};
use shrinkmpc::Error;

const OUTPUT_DIR_ENV: &str = "SHRINKMPC_OUTPUT_DIR";

#[derive(Parser)]
#[command(name = "shrinkmpc", version, about = "Robust shrinking-horizon MPC experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one closed-loop scenario (or a batch with --montecarlo).
    Run {
        #[command(flatten)]
        common: Common,
        /// Run this many seeded uniform realizations instead of one run.
        #[arg(long, value_name = "RUNS")]
        montecarlo: Option<usize>,
    },
    /// Compute the offline initial trajectory and write it as CSV.
    InitTraj {
        #[command(flatten)]
        common: Common,
        /// Destination file; defaults to `<dir>/<name>_initial.csv`.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Run the configured Monte Carlo batch.
    Montecarlo {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        runs: Option<usize>,
    },
    /// Summarize run and batch JSON files.
    Report {
        /// Summary files or directories containing them.
        #[arg(required = true)]
        paths: Vec<PathBuf>,
    },
}

#[derive(Args)]
struct Common {
    /// Scenario file (TOML).
    config: PathBuf,
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    disturbance: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    sample_time: Option<f64>,
    #[arg(long)]
    max_iters: Option<usize>,
    /// Output directory; takes precedence over the environment and the file.
    #[arg(long)]
    output_dir: Option<PathBuf>,
    /// Override any key, e.g. `--set solver.tol_cost=1e-8`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

/// Failure classified by exit status.
enum Failure {
    Config(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(msg) => Failure::Config(msg),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

impl Common {
    fn load(&self) -> CliResult<ScenarioConfig> {
        let mut overrides = Vec::new();
        for item in &self.overrides {
            let (k, v) = item
                .split_once('=')
                .ok_or_else(|| Failure::Config(format!("--set expects KEY=VALUE, got '{item}'")))?;
            overrides.push((k.trim().to_string(), v.trim().to_string()));
        }
        let quoted = |s: &str| format!("\"{s}\"");
        let flags = [
            ("controller.mode", self.mode.as_deref().map(quoted)),
            ("disturbance.kind", self.disturbance.as_deref().map(quoted)),
            ("disturbance.seed", self.seed.map(|s| s.to_string())),
            ("model.sample_time", self.sample_time.map(|t| format!("{t:?}"))),
            ("controller.max_iters", self.max_iters.map(|n| n.to_string())),
        ];
        overrides.extend(flags.into_iter().filter_map(|(k, v)| v.map(|v| (k.to_string(), v))));
        let mut config = ScenarioConfig::load(&self.config, &overrides)?;
        if let Some(dir) = &self.output_dir {
            config.output.dir = dir.clone();
        } else if let Some(dir) = std::env::var_os(OUTPUT_DIR_ENV) {
            config.output.dir = PathBuf::from(dir);
        }
        Ok(config)
    }
}

fn output_path(config: &ScenarioConfig, suffix: &str) -> CliResult<PathBuf> {
    std::fs::create_dir_all(&config.output.dir)?;
    Ok(config.output.dir.join(format!("{}{suffix}", config.output.name)))
}

fn initial_reference(config: &ScenarioConfig, scenario: &Scenario) -> CliResult<(ReferenceTrajectory, Assessment)> {
    match &config.controller.initial_trajectory {
        Some(path) => {
            let traj = io::load_trajectory(path)
                .map_err(|e| Failure::Runtime(format!("cannot load {}: {e}", path.display())))?;
            Ok(scenario.adopt_initial(traj)?)
        }
        None => Ok(scenario.generate_initial()?),
    }
}

fn write_log(log: &ClosedLoopLog, path: &Path) -> CliResult<()> {
    io::write_log(log, BufWriter::new(File::create(path)?))?;
    Ok(())
}

fn print_run(label: &str, s: &RunSummary) {
    println!(
        "{label}: mode={} disturbance={} seed={} violations={} objective_eq={:.6} optimized={}/{} clamped={}{}",
        s.mode,
        s.disturbance,
        s.seed,
        s.violation_steps,
        s.equalized_objective,
        s.optimized_steps,
        s.steps,
        s.clamp_count,
        s.failure.as_deref().map(|f| format!(" failure=\"{f}\"")).unwrap_or_default(),
    );
}

fn cmd_run(common: &Common, montecarlo: Option<usize>) -> CliResult<()> {
    let config = common.load()?;
    if let Some(runs) = montecarlo {
        return cmd_montecarlo(config, Some(runs));
    }
    let scenario = config.build()?;
    let initial = initial_reference(&config, &scenario)?;
    let factory = scenario.factory(initial);
    io::save_trajectory(&factory.initial, &output_path(&config, "_initial.csv")?)?;

    if config.study.fallback_alternation {
        let (study, logs) = fallback_alternation_study(&factory, &config.realization(), scenario.sample_time)?;
        for (log, tag) in logs.iter().zip(["optimized", "alternating", "fallback"]) {
            write_log(log, &output_path(&config, &format!("_{tag}.csv"))?)?;
            print_run(tag, &RunSummary::from_log(&config.output.name, log));
        }
        io::write_json(&study, &output_path(&config, "_study.json")?)?;
        println!(
            "normalized objective: optimized={:.4} alternating={:.4} fallback={:.4} ordering={}",
            study.normalized[0], study.normalized[1], study.normalized[2], study.ordering_holds
        );
        return Ok(());
    }

    let log = factory.run(&config.realization(), scenario.sample_time)?;
    write_log(&log, &output_path(&config, ".csv")?)?;
    if log.mode == ControlMode::FallbackOnly {
        let file = BufWriter::new(File::create(output_path(&config, "_error_sets.csv")?)?);
        io::write_error_sets(&factory.assessment.errors, &factory.initial, &log.states, file)?;
    }
    let summary = RunSummary::from_log(&config.output.name, &log);
    io::write_json(&summary, &output_path(&config, "_summary.json")?)?;
    print_run(&config.output.name, &summary);
    match log.failure {
        Some(f) => Err(Failure::Runtime(f)),
        None => Ok(()),
    }
}

fn cmd_montecarlo(config: ScenarioConfig, runs: Option<usize>) -> CliResult<()> {
    let scenario = config.build()?;
    let initial = initial_reference(&config, &scenario)?;
    let factory = scenario.factory(initial);
    let mut realizations = uniform_realizations(config.montecarlo.base_seed, runs.unwrap_or(config.montecarlo.runs));
    if config.montecarlo.include_extremes {
        for kind in [RealizationKind::ConstantHigh, RealizationKind::ConstantLow] {
            realizations.push(DisturbanceRealization::new(kind, 0, config.disturbance.period));
        }
    }
    let report = run_monte_carlo(&factory, &realizations, scenario.sample_time)?;
    let mut summaries = Vec::with_capacity(report.logs.len());
    for (i, log) in report.logs.iter().enumerate() {
        let tag = match log.realization.kind {
            RealizationKind::Uniform => format!("run{i:03}"),
            kind => kind.as_str().to_string(),
        };
        write_log(log, &output_path(&config, &format!("_{tag}.csv"))?)?;
        summaries.push(RunSummary::from_log(&format!("{}_{tag}", config.output.name), log));
    }
    let s = &report.summary;
    io::write_json(
        &BatchSummary {
            name: config.output.name.clone(),
            aggregate: s.clone(),
            runs: summaries,
        },
        &output_path(&config, "_montecarlo.json")?,
    )?;
    println!(
        "{}: runs={} failed={} runs_with_violations={} violation_steps={} contained={}/{} objective_eq=[{:.3}, {:.3}, {:.3}]",
        config.output.name,
        s.runs,
        s.failed_runs,
        s.runs_with_violations,
        s.total_violation_steps,
        s.contained_runs,
        s.containment_checked,
        s.objective_min,
        s.objective_mean,
        s.objective_max
    );
    if !s.max_tightness.is_empty() {
        println!("max per-axis tightness: {:?}", s.max_tightness);
    }
    if s.failed_runs > 0 {
        return Err(Failure::Runtime(format!("{} runs failed", s.failed_runs)));
    }
    Ok(())
}

fn cmd_init_traj(common: &Common, output: Option<&Path>) -> CliResult<()> {
    let config = common.load()?;
    let scenario = config.build()?;
    let (traj, assessment) = scenario.generate_initial()?;
    let path = match output {
        Some(p) => p.to_path_buf(),
        None => output_path(&config, "_initial.csv")?,
    };
    io::save_trajectory(&traj, &path)?;
    let widest = assessment.errors.errors.iter().map(|e| e.radius().amax()).fold(0.0, f64::max);
    println!("wrote {} ({} steps, widest error radius {widest:.6})", path.display(), traj.len());
    Ok(())
}

fn collect_json(paths: &[PathBuf]) -> CliResult<Vec<PathBuf>> {
    let mut files = Vec::new();
    for p in paths {
        if p.is_dir() {
            let mut found: Vec<PathBuf> = std::fs::read_dir(p)?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| f.extension().is_some_and(|x| x == "json"))
                .collect();
            found.sort();
            files.extend(found);
        } else {
            files.push(p.clone());
        }
    }
    Ok(files)
}

fn cmd_report(paths: &[PathBuf]) -> CliResult<()> {
    let files = collect_json(paths)?;
    if files.is_empty() {
        return Err(Failure::Runtime("no summary files found".into()));
    }
    for file in files {
        let text = std::fs::read_to_string(&file)?;
        let value: serde_json::Value = serde_json::from_str(&text)
            .map_err(|e| Failure::Runtime(format!("{}: {e}", file.display())))?;
        println!("== {}", file.display());
        if let Some(aggregate) = value.get("aggregate") {
            for key in [
                "runs",
                "failed_runs",
                "runs_with_violations",
                "total_violation_steps",
                "contained_runs",
                "containment_checked",
                "max_tightness",
                "objective_mean",
                "mean_success_rate",
            ] {
                println!("  {key}: {}", aggregate.get(key).unwrap_or(&serde_json::Value::Null));
            }
        } else if let Ok(s) = serde_json::from_value::<RunSummary>(value.clone()) {
            print_run(&s.name, &s);
            println!(
                "  solve time [s]: mean={:.4} p50={:.4} p90={:.4} max={:.4}",
                s.solve_time.mean, s.solve_time.p50, s.solve_time.p90, s.solve_time.max
            );
        } else {
            println!("{}", serde_json::to_string_pretty(&value).unwrap_or_default());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run { common, montecarlo } => cmd_run(common, *montecarlo),
        Command::InitTraj { common, output } => cmd_init_traj(common, output.as_deref()),
        Command::Montecarlo { common, runs } => common.load().and_then(|c| cmd_montecarlo(c, *runs)),
        Command::Report { paths } => cmd_report(paths),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("error: invalid configuration: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
