//! One augmented-Lagrangian run from a given starting point.

use super::lbfgs::{self, InnerOptions, InnerStop};
use super::{Nlp, NlpEval, OuterRecord, SolveOptions, StartReport, Status};

const PENALTY_MAX: f64 = 1e12;

/// `[c(x); g(x) − u]`.
fn constraints(e: &NlpEval, u: &[f64]) -> Vec<f64> {
    e.eq.iter()
        .copied()
        .chain(e.ineq.iter().zip(u).map(|(g, u)| g - u))
        .collect()
}

/// Gradient in `(x, u)` of `f + wᵀ[c; g − u]`.
fn lagrangian_gradient(e: &NlpEval, w: &[f64]) -> Vec<f64> {
    let me = e.eq.len();
    let mut grad = e.grad.clone();
    e.jac_eq.mul_transpose_add(&w[..me], &mut grad);
    e.jac_ineq.mul_transpose_add(&w[me..], &mut grad);
    grad.extend(w[me..].iter().map(|w| -w));
    grad
}

fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Projected Lagrangian gradient in `x` plus complementarity, with the
/// inequality multipliers clipped to the sign the KKT conditions allow.
fn first_order_optimality(
    e: &NlpEval,
    x: &[f64],
    lambda: &[f64],
    lower: &[f64],
    upper: &[f64],
) -> f64 {
    let me = e.eq.len();
    let mut w = lambda.to_vec();
    for v in &mut w[me..] {
        *v = v.min(0.0);
    }
    let mut grad = e.grad.clone();
    e.jac_eq.mul_transpose_add(&w[..me], &mut grad);
    e.jac_ineq.mul_transpose_add(&w[me..], &mut grad);
    let stationarity = lbfgs::projected_gradient_norm(x, &grad, lower, upper);
    let complementarity = e
        .ineq
        .iter()
        .zip(&w[me..])
        .fold(0.0f64, |m, (g, l)| m.max((g.max(0.0) * l).abs()));
    stationarity.max(complementarity)
}

pub(crate) fn run_start<P: Nlp + ?Sized>(
    problem: &P,
    mut x0: Vec<f64>,
    o: &SolveOptions,
    index: usize,
) -> StartReport {
    let n = problem.n_vars();
    let mi = problem.n_ineq();
    let mut report = StartReport {
        index,
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
        message: None,
        history: Vec::new(),
        log: Vec::new(),
    };
    if x0.len() != n {
        report.message = Some(format!(
            "initial point has length {}, expected {n}",
            x0.len()
        ));
        return report;
    }
    lbfgs::project(&mut x0, problem.lower(), problem.upper());
    report.evaluations = 1;
    let first = match problem.evaluate(&x0) {
        Ok(e) => e,
        Err(m) => {
            report.message = Some(format!("initial point: {m}"));
            return report;
        }
    };

    let mut lower = problem.lower().to_vec();
    lower.extend(std::iter::repeat_n(0.0, mi));
    let mut upper = problem.upper().to_vec();
    upper.extend(std::iter::repeat_n(f64::INFINITY, mi));
    let mut y = x0;
    y.extend(first.ineq.iter().map(|g| g.max(0.0)));

    let sched = o.inner_tol_schedule;
    let eta_floor = 0.1 * o.constraint_tol;
    let mut lambda = vec![0.0; problem.n_eq() + mi];
    let mut mu = o.penalty_init;
    let mut omega = sched.initial.max(sched.floor);
    let mut eta = mu.powf(-0.1).max(eta_floor);
    let mut converged = false;

    for outer in 1..=o.max_outer {
        let iter_left = o.max_iter.saturating_sub(report.iterations);
        let evals_left = o.max_fun_evals.saturating_sub(report.evaluations);
        if iter_left == 0 || evals_left < 2 {
            report.message = Some("iteration or evaluation budget exhausted".into());
            break;
        }
        let (lam, pen) = (lambda.clone(), mu);
        let merit = |yy: &[f64]| -> Result<(f64, Vec<f64>), String> {
            let e = problem.evaluate(&yy[..n])?;
            let c = constraints(&e, &yy[n..]);
            let w: Vec<f64> = lam.iter().zip(&c).map(|(l, c)| l + pen * c).collect();
            let value = e.f
                + lam.iter().zip(&c).map(|(l, c)| l * c).sum::<f64>()
                + 0.5 * pen * c.iter().map(|c| c * c).sum::<f64>();
            Ok((value, lagrangian_gradient(&e, &w)))
        };
        let inner = lbfgs::minimize(
            merit,
            y.clone(),
            &lower,
            &upper,
            InnerOptions {
                tol: omega,
                max_iter: iter_left,
                max_evals: evals_left - 1,
                memory: o.memory,
            },
        );
        report.iterations += inner.iterations;
        report.evaluations += inner.evaluations + 1;
        report.outer_iterations = outer;
        if let InnerStop::EvalFailure(m) = &inner.stop {
            report.message = Some(m.clone());
            break;
        }
        let step = y
            .iter()
            .zip(&inner.y)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        y = inner.y;
        let e = match problem.evaluate(&y[..n]) {
            Ok(e) => e,
            Err(m) => {
                report.message = Some(m);
                break;
            }
        };
        let c = constraints(&e, &y[n..]);
        let violation = norm_inf(&c);
        let estimate: Vec<f64> = lambda.iter().zip(&c).map(|(l, c)| l + mu * c).collect();
        let optimality =
            lbfgs::projected_gradient_norm(&y, &lagrangian_gradient(&e, &estimate), &lower, &upper);
        report.history.push(OuterRecord {
            outer,
            objective: problem.report_objective(e.f),
            max_violation: violation,
            penalty: mu,
            step,
            inner_tol: omega,
            inner_iterations: inner.iterations,
            optimality,
        });

        if violation <= eta {
            lambda = estimate;
            omega = (omega / mu).max(sched.floor);
            eta = (eta / mu.powf(0.9)).max(eta_floor);
        } else {
            mu = (mu * o.penalty_growth).min(PENALTY_MAX);
            omega = (sched.initial / mu).max(sched.floor);
            eta = mu.powf(-0.1).max(eta_floor);
        }

        if violation <= o.constraint_tol && optimality <= o.constraint_tol {
            converged = true;
            break;
        }
        if violation <= o.constraint_tol && step <= o.step_tol && inner.stop != InnerStop::Converged
        {
            report.message = Some(format!("step {step:.3e} below tolerance"));
            break;
        }
        if violation > eta && pen >= PENALTY_MAX {
            report.message = Some("penalty limit reached".into());
            break;
        }
    }

    let mut x = y[..n].to_vec();
    problem.polish(&mut x);
    report.evaluations += 1;
    match problem.evaluate(&x) {
        Ok(e) => {
            report.max_eq_residual = e.max_eq_residual();
            report.max_ineq_violation = e.max_ineq_violation();
            report.first_order_optimality = report
                .history
                .last()
                .map_or(f64::INFINITY, |r| r.optimality);
            report.polished_optimality =
                first_order_optimality(&e, &x, &lambda, problem.lower(), problem.upper());
            report.objective = Some(problem.report_objective(e.f));
            let feasible = e.max_violation() <= o.constraint_tol;
            report.status = match (feasible, converged) {
                (true, true) => Status::Optimal,
                (true, false) => Status::FeasibleStalled,
                (false, _) => Status::Infeasible,
            };
        }
        Err(m) => {
            report.status = Status::EvalFailure;
            report.message = Some(format!("final point: {m}"));
        }
    }
    report.x = x;
    report.log = report
        .history
        .iter()
        .map(|r| {
            format!(
                "start={index} outer={} objective={:.12e} max_violation={:.3e} penalty={:.1e} \
                 step={:.3e} inner_iterations={} optimality={:.3e}",
                r.outer,
                r.objective,
                r.max_violation,
                r.penalty,
                r.step,
                r.inner_iterations,
                r.optimality
            )
        })
        .collect();
    report
}
