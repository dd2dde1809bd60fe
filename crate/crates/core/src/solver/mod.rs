//! Multi-start augmented-Lagrangian solver for smooth bound-constrained
//! programs with equality and inequality rows.
//!
//! Inequalities `g(x) ≥ 0` become `g(x) − u = 0` with `u ≥ 0`, so the
//! augmented Lagrangian only ever sees equalities and box bounds. Each
//! subproblem is solved by a projected L-BFGS method; multipliers and the
//! penalty follow the classic LANCELOT update rules.

mod auglag;
pub mod benchmarks;
mod lbfgs;
mod verify;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::objective::ObjectiveBreakdown;
use crate::sparse::Triplets;

pub use verify::{verify, verify_point, Diagnostics};

/// Objective, constraints and first derivatives at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct NlpEval {
    pub f: f64,
    pub grad: Vec<f64>,
    pub eq: Vec<f64>,
    /// Feasible when every entry is nonnegative.
    pub ineq: Vec<f64>,
    pub jac_eq: Triplets,
    pub jac_ineq: Triplets,
}

impl NlpEval {
    pub fn max_eq_residual(&self) -> f64 {
        self.eq.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn max_ineq_violation(&self) -> f64 {
        self.ineq.iter().fold(0.0, |m, v| m.max(-v))
    }

    pub fn max_violation(&self) -> f64 {
        self.max_eq_residual().max(self.max_ineq_violation())
    }
}

/// A smooth program `min f(x)` subject to `c(x) = 0`, `g(x) ≥ 0` and
/// `lower ≤ x ≤ upper`. Implementations must be reentrant.
pub trait Nlp: Sync {
    fn n_vars(&self) -> usize;
    fn lower(&self) -> &[f64];
    fn upper(&self) -> &[f64];
    fn n_eq(&self) -> usize;
    fn n_ineq(&self) -> usize;
    fn evaluate(&self, x: &[f64]) -> Result<NlpEval, String>;

    /// A random starting point. The default samples uniformly inside the
    /// box, using a unit interval next to any infinite bound.
    fn initial_point(&self, rng: &mut ChaCha8Rng) -> Result<Vec<f64>, String> {
        Ok(self
            .lower()
            .iter()
            .zip(self.upper())
            .map(|(&l, &u)| match (l.is_finite(), u.is_finite()) {
                (true, true) if l < u => rng.random_range(l..=u),
                (true, true) => l,
                (true, false) => l + rng.random::<f64>(),
                (false, true) => u - rng.random::<f64>(),
                (false, false) => rng.random_range(-1.0..=1.0),
            })
            .collect())
    }

    /// Converts the solver's objective into reporting units.
    fn report_objective(&self, f: f64) -> f64 {
        f
    }

    /// Post-processing applied to each start's final point.
    fn polish(&self, _x: &mut [f64]) {}

    fn breakdown(&self, _x: &[f64]) -> Option<ObjectiveBreakdown> {
        None
    }
}

/// Inner tolerance schedule. The first subproblem is solved to `initial`;
/// after a multiplier update the tolerance divides by the penalty, after a
/// penalty increase it resets to `initial / penalty`, never below `floor`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InnerTolSchedule {
    pub initial: f64,
    pub floor: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    /// Per start.
    pub max_fun_evals: usize,
    /// Inner quasi-Newton iterations per start.
    pub max_iter: usize,
    pub max_outer: usize,
    pub step_tol: f64,
    pub constraint_tol: f64,
    pub n_starts: usize,
    pub seed: u64,
    pub penalty_init: f64,
    pub penalty_growth: f64,
    pub inner_tol_schedule: InnerTolSchedule,
    pub memory: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            max_fun_evals: 1_000_000,
            max_iter: 300_000,
            max_outer: 60,
            step_tol: 1e-6,
            constraint_tol: 1e-6,
            n_starts: 8,
            seed: 0,
            penalty_init: 10.0,
            penalty_growth: 10.0,
            inner_tol_schedule: InnerTolSchedule {
                initial: 1e-1,
                floor: 1e-9,
            },
            memory: 10,
        }
    }
}

impl SolveOptions {
    pub fn validate(&self) -> Result<(), String> {
        let positive = [
            ("step_tol", self.step_tol),
            ("constraint_tol", self.constraint_tol),
            ("penalty_init", self.penalty_init),
            (
                "inner_tol_schedule.initial",
                self.inner_tol_schedule.initial,
            ),
            ("inner_tol_schedule.floor", self.inner_tol_schedule.floor),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(format!("{name} must be positive, got {v}"));
            }
        }
        if !(self.penalty_growth > 1.0) {
            return Err(format!(
                "penalty_growth must exceed 1, got {}",
                self.penalty_growth
            ));
        }
        if self.n_starts == 0 {
            return Err("n_starts must be at least 1".into());
        }
        if self.max_fun_evals == 0 || self.max_iter == 0 || self.max_outer == 0 || self.memory == 0
        {
            return Err("iteration and evaluation limits must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    Optimal,
    FeasibleStalled,
    Infeasible,
    EvalFailure,
}

impl Status {
    pub fn is_feasible(self) -> bool {
        matches!(self, Status::Optimal | Status::FeasibleStalled)
    }
}

/// Outcome of one start.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StartReport {
    pub index: usize,
    pub status: Status,
    /// Final point, empty when the start could not be evaluated.
    pub x: Vec<f64>,
    pub objective: Option<f64>,
    pub max_eq_residual: f64,
    pub max_ineq_violation: f64,
    /// Stationarity of the augmented Lagrangian at the last outer iterate.
    pub first_order_optimality: f64,
    /// Lagrangian stationarity and complementarity at the polished point.
    pub polished_optimality: f64,
    pub outer_iterations: usize,
    pub iterations: usize,
    pub evaluations: usize,
    pub message: Option<String>,
    pub history: Vec<OuterRecord>,
    pub log: Vec<String>,
}

/// State after one outer iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OuterRecord {
    pub outer: usize,
    /// In reporting units.
    pub objective: f64,
    /// Max-norm of the equality rows and the slack-converted inequalities.
    pub max_violation: f64,
    pub penalty: f64,
    pub step: f64,
    pub inner_tol: f64,
    pub inner_iterations: usize,
    pub optimality: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveResult {
    pub status: Status,
    pub z_star: Vec<f64>,
    /// Objective in reporting units.
    pub objective: Option<f64>,
    pub breakdown: Option<ObjectiveBreakdown>,
    pub max_eq_residual: f64,
    pub max_ineq_violation: f64,
    pub first_order_optimality: f64,
    /// Inner iterations of the winning start.
    pub iterations: usize,
    /// Evaluations summed over all starts.
    pub evaluations: usize,
    pub winner: Option<usize>,
    pub starts: Vec<StartReport>,
}

impl SolveResult {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("solve result serializes")
    }

    /// One line per outer iteration of every start.
    pub fn log_text(&self) -> String {
        let mut out = String::new();
        for s in &self.starts {
            for line in &s.log {
                out.push_str(line);
                out.push('\n');
            }
            let end = match &s.message {
                Some(m) => format!("start={} status={:?} message={m}\n", s.index, s.status),
                None => format!("start={} status={:?}\n", s.index, s.status),
            };
            out.push_str(&end);
        }
        out
    }
}

/// The generator for start `index`: one ChaCha stream per start, so
/// starts do not depend on how many others run.
pub fn start_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

pub fn solve<P: Nlp + ?Sized>(problem: &P, options: &SolveOptions) -> Result<SolveResult, String> {
    options.validate()?;
    let starts: Vec<StartReport> = (0..options.n_starts)
        .into_par_iter()
        .map(|i| {
            let mut rng = start_rng(options.seed, i);
            match problem.initial_point(&mut rng) {
                Ok(x0) => auglag::run_start(problem, x0, options, i),
                Err(message) => StartReport {
                    index: i,
                    status: Status::EvalFailure,
                    x: Vec::new(),
                    objective: None,
                    max_eq_residual: f64::INFINITY,
                    max_ineq_violation: f64::INFINITY,
                    first_order_optimality: f64::INFINITY,
                    polished_optimality: f64::INFINITY,
                    outer_iterations: 0,
                    iterations: 0,
                    evaluations: 0,
                    message: Some(format!("initial point: {message}")),
                    history: Vec::new(),
                    log: Vec::new(),
                },
            }
        })
        .collect();
    Ok(reduce(problem, starts))
}

/// Lowest objective among feasible starts (lowest index on ties), else the
/// smallest violation among evaluated starts.
fn reduce<P: Nlp + ?Sized>(problem: &P, starts: Vec<StartReport>) -> SolveResult {
    let evaluations = starts.iter().map(|s| s.evaluations).sum();
    let mut winner: Option<&StartReport> = None;
    for s in starts.iter().filter(|s| s.status.is_feasible()) {
        let better = match winner {
            None => true,
            Some(w) => s.objective.unwrap_or(f64::INFINITY) < w.objective.unwrap_or(f64::INFINITY),
        };
        if better {
            winner = Some(s);
        }
    }
    if winner.is_none() {
        for s in starts.iter().filter(|s| s.status == Status::Infeasible) {
            let v = s.max_eq_residual.max(s.max_ineq_violation);
            if winner.is_none_or(|w| v < w.max_eq_residual.max(w.max_ineq_violation)) {
                winner = Some(s);
            }
        }
    }
    match winner {
        Some(w) => SolveResult {
            status: w.status,
            z_star: w.x.clone(),
            objective: w.objective,
            breakdown: problem.breakdown(&w.x),
            max_eq_residual: w.max_eq_residual,
            max_ineq_violation: w.max_ineq_violation,
            first_order_optimality: w.first_order_optimality,
            iterations: w.iterations,
            evaluations,
            winner: Some(w.index),
            starts: starts.clone(),
        },
        None => SolveResult {
            status: Status::EvalFailure,
            z_star: Vec::new(),
            objective: None,
            breakdown: None,
            max_eq_residual: f64::INFINITY,
            max_ineq_violation: f64::INFINITY,
            first_order_optimality: f64::INFINITY,
            iterations: 0,
            evaluations,
            winner: None,
            starts,
        },
    }
}
