//! Projected limited-memory BFGS for bound-constrained minimization.
//!
//! Directions come from the two-loop recursion restricted to the free
//! variables (those not held at a bound by the gradient); steps follow the
//! projected path with Armijo backtracking. A failed evaluation counts as
//! `+∞`, so the line search simply backs away from it.

use std::collections::VecDeque;

#[derive(Debug, Clone, Copy)]
pub(crate) struct InnerOptions {
    /// Stop when the projected gradient's max-norm falls below this.
    pub tol: f64,
    pub max_iter: usize,
    pub max_evals: usize,
    pub memory: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum InnerStop {
    Converged,
    SmallStep,
    LineSearch,
    Budget,
    EvalFailure(String),
}

#[derive(Debug, Clone)]
pub(crate) struct InnerOutcome {
    pub y: Vec<f64>,
    pub iterations: usize,
    pub evaluations: usize,
    pub stop: InnerStop,
}

pub(crate) fn project(y: &mut [f64], lower: &[f64], upper: &[f64]) {
    for ((v, &l), &u) in y.iter_mut().zip(lower).zip(upper) {
        *v = v.clamp(l, u);
    }
}

/// `‖P(y − g) − y‖∞`.
pub(crate) fn projected_gradient_norm(y: &[f64], g: &[f64], lower: &[f64], upper: &[f64]) -> f64 {
    y.iter()
        .zip(g)
        .zip(lower.iter().zip(upper))
        .map(|((&y, &g), (&l, &u))| ((y - g).clamp(l, u) - y).abs())
        .fold(0.0, f64::max)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(a, b)| a * b).sum()
}

fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

pub(crate) fn minimize<F>(
    mut fun: F,
    mut y: Vec<f64>,
    lower: &[f64],
    upper: &[f64],
    opts: InnerOptions,
) -> InnerOutcome
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>), String>,
{
    project(&mut y, lower, upper);
    let mut evaluations = 1;
    let (mut f, mut g) = match fun(&y) {
        Ok(v) if v.0.is_finite() => v,
        Ok(_) => {
            return failed(y, "objective is not finite at the initial point".into());
        }
        Err(e) => return failed(y, e),
    };
    let mut pairs: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::new();
    let n = y.len();
    let mut iterations = 0;
    let mut stagnant = 0;

    let stop = loop {
        let pg_norm = projected_gradient_norm(&y, &g, lower, upper);
        if pg_norm <= opts.tol {
            break InnerStop::Converged;
        }
        if iterations >= opts.max_iter || evaluations >= opts.max_evals {
            break InnerStop::Budget;
        }
        iterations += 1;

        let free: Vec<bool> = (0..n)
            .map(|i| !((y[i] <= lower[i] && g[i] > 0.0) || (y[i] >= upper[i] && g[i] < 0.0)))
            .collect();
        let gf: Vec<f64> = (0..n).map(|i| if free[i] { g[i] } else { 0.0 }).collect();
        let mut d = two_loop(&gf, &pairs);
        for i in 0..n {
            if !free[i] {
                d[i] = 0.0;
            }
        }
        if !(dot(&gf, &d) < 0.0) {
            pairs.clear();
            d = gf.iter().map(|v| -v).collect();
        }

        let mut alpha = if pairs.is_empty() {
            (1.0 / norm_inf(&d)).min(1.0)
        } else {
            1.0
        };
        let mut accepted = None;
        for _ in 0..60 {
            let mut trial: Vec<f64> = y.iter().zip(&d).map(|(y, d)| y + alpha * d).collect();
            project(&mut trial, lower, upper);
            let moved: Vec<f64> = trial.iter().zip(&y).map(|(t, y)| t - y).collect();
            if norm_inf(&moved) == 0.0 {
                break;
            }
            if evaluations >= opts.max_evals {
                break;
            }
            evaluations += 1;
            if let Ok((ft, gt)) = fun(&trial) {
                let decrease = dot(&g, &moved).min(0.0);
                if ft.is_finite() && ft <= f + 1e-4 * decrease && (ft < f || decrease < 0.0) {
                    accepted = Some((trial, moved, ft, gt));
                    break;
                }
            }
            alpha *= 0.5;
        }

        let Some((trial, s, ft, gt)) = accepted else {
            if pairs.is_empty() {
                break if evaluations >= opts.max_evals {
                    InnerStop::Budget
                } else {
                    InnerStop::LineSearch
                };
            }
            pairs.clear();
            continue;
        };
        let yv: Vec<f64> = gt.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &yv);
        if sy > 1e-12 * dot(&s, &s).sqrt() * dot(&yv, &yv).sqrt() {
            if pairs.len() == opts.memory {
                pairs.pop_front();
            }
            pairs.push_back((s.clone(), yv, 1.0 / sy));
        }
        let step = norm_inf(&s);
        let scale = 1.0 + norm_inf(&trial);
        let change = f - ft;
        y = trial;
        f = ft;
        g = gt;
        stagnant = if change <= 1e-15 * f.abs() {
            stagnant + 1
        } else {
            0
        };
        if step <= 1e-15 * scale || stagnant >= 5 {
            break InnerStop::SmallStep;
        }
    };

    InnerOutcome {
        y,
        iterations,
        evaluations,
        stop,
    }
}

fn failed(y: Vec<f64>, message: String) -> InnerOutcome {
    InnerOutcome {
        y,
        iterations: 0,
        evaluations: 1,
        stop: InnerStop::EvalFailure(message),
    }
}

/// `−H g` with the inverse-Hessian approximation from the stored pairs.
fn two_loop(g: &[f64], pairs: &VecDeque<(Vec<f64>, Vec<f64>, f64)>) -> Vec<f64> {
    let mut q = g.to_vec();
    let mut alphas = Vec::with_capacity(pairs.len());
    for (s, y, rho) in pairs.iter().rev() {
        let a = rho * dot(s, &q);
        for (q, y) in q.iter_mut().zip(y) {
            *q -= a * y;
        }
        alphas.push(a);
    }
    if let Some((s, y, _)) = pairs.back() {
        let gamma = dot(s, y) / dot(y, y);
        for v in q.iter_mut() {
            *v *= gamma;
        }
    }
    for ((s, y, rho), a) in pairs.iter().zip(alphas.iter().rev()) {
        let b = rho * dot(y, &q);
        for (q, s) in q.iter_mut().zip(s) {
            *q += (a - b) * s;
        }
    }
    q.iter().map(|v| -v).collect()
}
