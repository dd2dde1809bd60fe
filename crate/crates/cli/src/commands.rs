use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use pcm_forge_core::objective::{self, ObjectiveBreakdown, ObjectiveReport};
use pcm_forge_core::plant::PcmDesign;
use pcm_forge_core::scenario::{load_config, RunConfig, ScenarioConfig, Weights};
use pcm_forge_core::simulate::{self, ControlSequence, Trajectory};
use pcm_forge_core::solver::{self, Diagnostics, SolveOptions, SolveResult, Status};
use pcm_forge_core::transcription::{assemble, NlpProblem};
use serde::Serialize;

use crate::error::CliError;
use crate::manifest::{RunManifest, CONFIG_COPY};

pub const TRAJECTORY_FILE: &str = "trajectory.csv";
pub const OBJECTIVES_FILE: &str = "objectives.json";
pub const SUMMARY_FILE: &str = "summary.json";
pub const SOLVE_LOG: &str = "solve.log";

pub struct RunArgs {
    pub config: PathBuf,
    pub out: PathBuf,
    pub profile: Option<PathBuf>,
}

fn load(args: &RunArgs) -> Result<RunConfig, CliError> {
    if !args.config.exists() {
        return Err(CliError::MissingInput {
            path: args.config.clone(),
        });
    }
    Ok(load_config(&args.config, args.profile.as_deref())?)
}

fn prepare_out(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

/// Trajectory CSV, objective JSON and the resolved config copy.
fn write_common(
    dir: &Path,
    run: &RunConfig,
    trajectory: &Trajectory,
    breakdown: ObjectiveBreakdown,
    weights: Weights,
) -> Result<(), CliError> {
    trajectory
        .save_csv(dir.join(TRAJECTORY_FILE))
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    let report = ObjectiveReport { breakdown, weights };
    write_text(&dir.join(OBJECTIVES_FILE), &(report.to_json() + "\n"))?;
    let copy = ScenarioConfig::from_scenario(&run.scenario, run.design);
    write_text(&dir.join(CONFIG_COPY), &copy.to_toml())
}

fn manifest(
    command: &str,
    args: &RunArgs,
    options: Option<SolveOptions>,
    started: Instant,
) -> RunManifest {
    RunManifest {
        command: command.into(),
        scenario_file: args.config.display().to_string(),
        scenario_copy: CONFIG_COPY.into(),
        profile_override: args.profile.as_ref().map(|p| p.display().to_string()),
        options,
        output_dir: args.out.display().to_string(),
        tool_version: env!("CARGO_PKG_VERSION").into(),
        seed: options.map(|o| o.seed),
        wall_clock_s: started.elapsed().as_secs_f64(),
    }
}

pub fn simulate(args: &RunArgs) -> Result<(), CliError> {
    let started = Instant::now();
    let run = load(args)?;
    let sc = &run.scenario;
    let design = run.design.ok_or_else(|| {
        CliError::Validation("simulate needs a [design] table with c_pcm and t_m".into())
    })?;
    if !sc.policy.is_all_fixed() {
        return Err(CliError::Validation(
            "simulate needs an all-fixed control policy; use `optimize` for optimized channels"
                .into(),
        ));
    }
    let controls = ControlSequence::from_fixed_policy(&sc.policy, sc.n_knots() - 1)
        .map_err(|e| CliError::Validation(e.to_string()))?;
    let trajectory =
        simulate::rollout(sc, &design, &controls).map_err(|e| CliError::Runtime(e.to_string()))?;
    let breakdown = objective::evaluate(&trajectory, &sc.weights, &sc.nominal)
        .map_err(|e| CliError::Validation(e.to_string()))?;

    prepare_out(&args.out)?;
    write_common(&args.out, &run, &trajectory, breakdown, sc.weights)?;
    manifest("simulate", args, None, started).write(&args.out)?;
    println!(
        "simulated {} knots, J_tot = {:.6e}",
        trajectory.n_knots(),
        breakdown.j_tot
    );
    println!("outputs written to {}", args.out.display());
    Ok(())
}

#[derive(Debug, Serialize)]
struct StartSummary {
    index: usize,
    status: Status,
    objective: Option<f64>,
    max_eq_residual: f64,
    max_ineq_violation: f64,
    first_order_optimality: f64,
    polished_optimality: f64,
    outer_iterations: usize,
    iterations: usize,
    evaluations: usize,
    message: Option<String>,
    log: String,
}

#[derive(Debug, Serialize)]
struct Summary {
    status: Status,
    objective: Option<f64>,
    design: Option<PcmDesign>,
    breakdown: Option<ObjectiveBreakdown>,
    max_eq_residual: f64,
    max_ineq_violation: f64,
    first_order_optimality: f64,
    iterations: usize,
    evaluations: usize,
    winner: Option<usize>,
    diagnostics: Diagnostics,
    starts: Vec<StartSummary>,
}

fn start_log_name(index: usize) -> String {
    format!("logs/start_{index:02}.log")
}

fn summarize(problem: &NlpProblem, result: &SolveResult) -> Summary {
    let design = problem.decode(&result.z_star).ok().map(|d| d.design);
    Summary {
        status: result.status,
        objective: result.objective,
        design,
        breakdown: result.breakdown,
        max_eq_residual: result.max_eq_residual,
        max_ineq_violation: result.max_ineq_violation,
        first_order_optimality: result.first_order_optimality,
        iterations: result.iterations,
        evaluations: result.evaluations,
        winner: result.winner,
        diagnostics: solver::verify(problem, result),
        starts: result
            .starts
            .iter()
            .map(|s| StartSummary {
                index: s.index,
                status: s.status,
                objective: s.objective,
                max_eq_residual: s.max_eq_residual,
                max_ineq_violation: s.max_ineq_violation,
                first_order_optimality: s.first_order_optimality,
                polished_optimality: s.polished_optimality,
                outer_iterations: s.outer_iterations,
                iterations: s.iterations,
                evaluations: s.evaluations,
                message: s.message.clone(),
                log: start_log_name(s.index),
            })
            .collect(),
    }
}

fn write_logs(dir: &Path, result: &SolveResult) -> Result<Vec<PathBuf>, CliError> {
    let logs = dir.join("logs");
    fs::create_dir_all(&logs).map_err(|e| CliError::io(&logs, e))?;
    let mut paths = Vec::with_capacity(result.starts.len());
    for s in &result.starts {
        let path = dir.join(start_log_name(s.index));
        let mut text = s.log.join("\n");
        if !text.is_empty() {
            text.push('\n');
        }
        text.push_str(&format!("status={:?}\n", s.status));
        if let Some(m) = &s.message {
            text.push_str(&format!("message={m}\n"));
        }
        write_text(&path, &text)?;
        paths.push(path);
    }
    write_text(&dir.join(SOLVE_LOG), &result.log_text())?;
    Ok(paths)
}

pub fn optimize(args: &RunArgs, options: SolveOptions) -> Result<(), CliError> {
    let started = Instant::now();
    options.validate().map_err(CliError::Validation)?;
    let run = load(args)?;
    let problem = assemble(&run.scenario).map_err(|e| CliError::Validation(e.to_string()))?;
    let result = solver::solve(&problem, &options).map_err(CliError::Validation)?;

    prepare_out(&args.out)?;
    let log_paths = write_logs(&args.out, &result)?;
    let summary = summarize(&problem, &result);
    let summary_text = serde_json::to_string_pretty(&summary).expect("summary serializes");
    write_text(&args.out.join(SUMMARY_FILE), &(summary_text + "\n"))?;

    if !result.status.is_feasible() {
        manifest("optimize", args, Some(options), started).write(&args.out)?;
        return Err(CliError::Solver {
            message: format!("solver finished with status {:?}", result.status),
            logs: log_paths,
        });
    }
    let decoded = problem
        .decode(&result.z_star)
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    let sc = &run.scenario;
    let breakdown = objective::evaluate(&decoded.trajectory, &sc.weights, &sc.nominal)
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    write_common(&args.out, &run, &decoded.trajectory, breakdown, sc.weights)?;
    manifest("optimize", args, Some(options), started).write(&args.out)?;

    println!(
        "status: {:?} (winner: start {})",
        result.status,
        result.winner.unwrap_or(0)
    );
    println!("C_pcm* = {:.6e} J", decoded.design.c_pcm);
    println!("T_m*   = {:.4} C", decoded.design.t_m);
    println!("J_tot  = {:.6e}", breakdown.j_tot);
    println!("outputs written to {}", args.out.display());
    Ok(())
}
