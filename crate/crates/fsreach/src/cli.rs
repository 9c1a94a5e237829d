//! Command-line interface.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use fsreach_core::occupancy::{avoid_sets_multi, occupancy};
use fsreach_core::sim::{self, trace_queries, Outcome, Scenario, SimTrace};
use fsreach_core::{Clock, FsrResult, NoClock};

use crate::clock::MonotonicClock;
use crate::error::{exit, AppError, AppResult};
use crate::io::{csv, num, sha256_hex, to_json, OutputDir};
use crate::job::{max_abs_diff, FsrJob};
use crate::mc;
use crate::report::{self, PlanJson, StepJson, TraceJson};
use crate::scenario::{config_hash, load_scenario, Overrides};

#[derive(Debug, Parser)]
#[command(name = "fsreach", version, about = "Forward stochastic reach sets and probabilistic avoidance planning")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Reach distributions for every step of a job.
    Fsr(JobArgs),
    /// Sparse engine against the dense grid baseline, with runtimes.
    BenchDp(JobArgs),
    /// Occupancy fields of the job's footprint at every step.
    Occupancy(JobArgs),
    /// Avoid boxes at the job's (or the given) alpha at every step.
    Avoid(JobArgs),
    /// One plan from the scenario's initial configuration.
    Plan(ScenarioArgs),
    /// Closed-loop run of a scenario.
    Simulate(ScenarioArgs),
    /// Closed-loop run followed by Monte-Carlo collision estimates.
    Validate(ScenarioArgs),
}

#[derive(Debug, Args)]
pub struct JobArgs {
    pub input: PathBuf,
    #[arg(long)]
    pub tau: Option<usize>,
    #[arg(long)]
    pub resolution: Option<f64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ScenarioArgs {
    pub input: PathBuf,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub horizon: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub resolution: Option<f64>,
    /// Monte-Carlo samples per step (`validate` only).
    #[arg(long, default_value_t = 100_000)]
    pub samples: u64,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

/// Parses `args` and runs the command, returning the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { exit::USAGE } else { exit::OK };
        }
    };
    match execute(&cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(command: &Command) -> AppResult<i32> {
    match command {
        Command::Fsr(a) => cmd_fsr(a),
        Command::BenchDp(a) => cmd_bench_dp(a),
        Command::Occupancy(a) => cmd_occupancy(a),
        Command::Avoid(a) => cmd_avoid(a),
        Command::Plan(a) => cmd_plan(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Validate(a) => cmd_validate(a),
    }
}

fn load_job(a: &JobArgs) -> AppResult<FsrJob> {
    let mut job = FsrJob::load(&a.input)?;
    if let Some(t) = a.tau {
        job.tau = t;
    }
    if let Some(r) = a.resolution {
        job.resolution = r;
    }
    if let Some(al) = a.alpha {
        job.alpha = Some(al);
    }
    job.validate()?;
    Ok(job)
}

fn job_hash(job: &FsrJob) -> AppResult<String> {
    Ok(sha256_hex(to_json(job)?.as_bytes()))
}

fn step_name(prefix: &str, t: usize) -> String {
    format!("{prefix}_t{t:03}.json")
}

fn bounds_csv(result: &FsrResult) -> String {
    let n = result.pmf(0).dim();
    let mut header = vec!["t".to_string(), "support_size".to_string(), "total_mass".to_string()];
    for k in 0..n {
        header.push(format!("lo{k}"));
    }
    for k in 0..n {
        header.push(format!("hi{k}"));
    }
    for k in 0..n {
        header.push(format!("mean{k}"));
    }
    let header: Vec<&str> = header.iter().map(|s| s.as_str()).collect();
    csv(
        &header,
        (0..=result.tau()).map(|t| {
            let pmf = result.pmf(t);
            let mut row = vec![t.to_string(), pmf.len().to_string(), num(pmf.total_mass())];
            let (lo, hi) = pmf.bounds();
            let l = pmf.lattice();
            row.extend(l.coord(&lo).into_iter().map(num));
            row.extend(l.coord(&hi).into_iter().map(num));
            row.extend(pmf.mean().into_iter().map(num));
            row
        }),
    )
}

fn runtime_csv(result: &FsrResult) -> String {
    csv(
        &["t", "seconds"],
        result.steps.iter().enumerate().map(|(t, s)| vec![t.to_string(), num(s.runtime.as_secs_f64())]),
    )
}

fn cmd_fsr(a: &JobArgs) -> AppResult<i32> {
    let job = load_job(a)?;
    let result = job.run(&MonotonicClock::new())?;
    let mut out = OutputDir::create(&a.out)?;
    for t in 0..=result.tau() {
        out.write_json(&step_name("pmf", t), result.pmf(t))?;
    }
    out.write("support_bounds.csv", &bounds_csv(&result))?;
    out.write_timing("fsr_timing.csv", &runtime_csv(&result))?;
    out.finish("fsr", &a.input, &job_hash(&job)?, None)?;
    Ok(exit::OK)
}

fn cmd_bench_dp(a: &JobArgs) -> AppResult<i32> {
    let job = load_job(a)?;
    let clock = MonotonicClock::new();
    let sparse = job.run(&clock)?;
    let dense = job.run_dp(&clock)?;
    let domain_cells: u128 = {
        let d = job.dp_domain.as_ref().expect("checked by run_dp");
        let (lo, hi) = job.lattice()?.index_range(d)?;
        lo.iter().zip(&hi).map(|(l, h)| (h - l + 1).max(0) as u128).product()
    };
    let mut out = OutputDir::create(&a.out)?;
    out.write(
        "agreement.csv",
        &csv(
            &["t", "support_size", "domain_cells", "max_abs_diff"],
            (0..=sparse.tau()).map(|t| {
                vec![
                    t.to_string(),
                    sparse.pmf(t).len().to_string(),
                    domain_cells.to_string(),
                    num(max_abs_diff(sparse.pmf(t), dense.pmf(t))),
                ]
            }),
        ),
    )?;
    out.write_timing(
        "runtime.csv",
        &csv(
            &["t", "fsr_seconds", "dp_seconds"],
            (0..=sparse.tau()).map(|t| {
                vec![
                    t.to_string(),
                    num(sparse.steps[t].runtime.as_secs_f64()),
                    num(dense.steps[t].runtime.as_secs_f64()),
                ]
            }),
        ),
    )?;
    out.finish("bench-dp", &a.input, &job_hash(&job)?, None)?;
    Ok(exit::OK)
}

fn cmd_occupancy(a: &JobArgs) -> AppResult<i32> {
    let job = load_job(a)?;
    let geometry = job.geometry.clone().ok_or_else(|| AppError::Usage("the job has no geometry".into()))?;
    let result = job.run(&NoClock)?;
    let mut out = OutputDir::create(&a.out)?;
    for t in 0..=result.tau() {
        let field = occupancy(result.pmf(t), &geometry)?.with_time_index(t);
        out.write_json(&step_name("occupancy", t), &field)?;
    }
    out.finish("occupancy", &a.input, &job_hash(&job)?, None)?;
    Ok(exit::OK)
}

fn cmd_avoid(a: &JobArgs) -> AppResult<i32> {
    let job = load_job(a)?;
    let geometry = job.geometry.clone().ok_or_else(|| AppError::Usage("the job has no geometry".into()))?;
    let alpha = job.alpha.ok_or_else(|| AppError::Usage("no alpha in the job; pass --alpha".into()))?;
    let result = job.run(&NoClock)?;
    let mut out = OutputDir::create(&a.out)?;
    for t in 0..=result.tau() {
        let mut set = avoid_sets_multi(std::slice::from_ref(result.pmf(t)), &geometry, alpha)?;
        set.t = t;
        out.write_json(&step_name("avoid", t), &set)?;
    }
    out.finish("avoid", &a.input, &job_hash(&job)?, None)?;
    Ok(exit::OK)
}

fn load_with_overrides(a: &ScenarioArgs) -> AppResult<Scenario> {
    let mut s = load_scenario(&a.input)?;
    let o = Overrides { alpha: a.alpha, horizon: a.horizon, seed: a.seed, resolution: a.resolution };
    o.apply(&mut s).map_err(|e| AppError::Usage(format!("override rejected: {e}")))?;
    Ok(s)
}

fn cmd_plan(a: &ScenarioArgs) -> AppResult<i32> {
    let s = load_with_overrides(a)?;
    let planner = s.planner()?;
    let clock = MonotonicClock::new();
    let step = planner.step(&s.robot.initial, &s.obstacle_starts(), &clock)?;
    let mut out = OutputDir::create(&a.out)?;
    out.write_json("plan.json", &PlanJson::new(&step.plan, &step.avoid))?;
    out.write_timing(
        "plan_timing.csv",
        &csv(&["solve_seconds", "nodes"], [vec![num(step.plan.solve_time.as_secs_f64()), step.plan.nodes.to_string()]]),
    )?;
    out.finish("plan", &a.input, &config_hash(&s)?, Some(s.seed))?;
    Ok(if step.plan.has_plan() { exit::OK } else { exit::INFEASIBLE })
}

/// Runs the scenario and writes trace artifacts into `out`.
pub fn simulate_into<C: Clock>(s: &Scenario, clock: &C, out: &mut OutputDir) -> AppResult<SimTrace> {
    let trace = sim::run(s, clock)?;
    let planner = s.planner()?;
    let steps = trace
        .records
        .iter()
        .map(|r| {
            let avoid_next = if s.obstacles.is_empty() {
                Vec::new()
            } else {
                planner.forecaster.avoid_sets(&r.obstacles, 1).map(|v| report::regions(&v[0]))?
            };
            Ok(StepJson {
                t: r.t,
                robot: r.robot.clone(),
                obstacles: r.obstacles.clone(),
                control: r.control.clone(),
                status: r.status,
                objective: r.objective,
                active_boxes: r.active_boxes,
                binaries: r.binaries,
                nodes: r.nodes,
                avoid_next,
            })
        })
        .collect::<fsreach_core::Result<Vec<_>>>()?;
    let json = TraceJson {
        name: s.name.clone(),
        alpha: s.alpha,
        seed: s.seed,
        horizon: s.horizon,
        resolution: s.resolution,
        outcome: trace.outcome,
        goal_reached: trace.goal_reached,
        collision_at_step: trace.collision_at_step,
        infeasible_at_step: trace.infeasible_at_step,
        goal: s.robot.goal.clone(),
        steps,
    };
    out.write_json("trace.json", &json)?;
    out.write("trace.csv", &report::trace_csv(&trace))?;
    out.write("obstacles.csv", &report::obstacles_csv(&trace))?;
    out.write_timing("solve_times.csv", &report::solve_times_csv(&trace))?;
    Ok(trace)
}

pub fn outcome_code(outcome: Outcome) -> i32 {
    match outcome {
        Outcome::GoalReached | Outcome::MissionComplete => exit::OK,
        Outcome::Infeasible => exit::INFEASIBLE,
        Outcome::Collision => exit::COLLISION,
    }
}

fn cmd_simulate(a: &ScenarioArgs) -> AppResult<i32> {
    let s = load_with_overrides(a)?;
    let mut out = OutputDir::create(&a.out)?;
    let trace = simulate_into(&s, &MonotonicClock::new(), &mut out)?;
    out.finish("simulate", &a.input, &config_hash(&s)?, Some(s.seed))?;
    log::info!("{:?} after {} steps", trace.outcome, trace.steps());
    Ok(outcome_code(trace.outcome))
}

fn cmd_validate(a: &ScenarioArgs) -> AppResult<i32> {
    if a.samples == 0 {
        return Err(AppError::Usage("--samples must be positive".into()));
    }
    let s = load_with_overrides(a)?;
    let mut out = OutputDir::create(&a.out)?;
    let trace = simulate_into(&s, &MonotonicClock::new(), &mut out)?;
    let queries = trace_queries(&trace);
    let estimates = mc::monte_carlo(&s, &queries, a.samples, s.seed, mc::worker_count())?;
    let rows = report::collision_rows(&queries, &estimates, s.alpha);
    out.write_json("collision_report.json", &rows)?;
    out.write("collision_report.csv", &report::collision_csv(&rows))?;
    out.finish("validate", &a.input, &config_hash(&s)?, Some(s.seed))?;
    Ok(if rows.iter().all(|r| r.pass) { exit::OK } else { exit::CHECK_FAILED })
}

/// Convenience for tests and scripts: run with arguments after the program
/// name.
pub fn run_args(args: &[&str]) -> i32 {
    run(std::iter::once("fsreach").chain(args.iter().copied()))
}

