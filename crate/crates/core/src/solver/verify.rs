//! Independent checks of a transcription solution against the simulator.

use serde::Serialize;

use super::SolveResult;
use crate::objective;
use crate::simulate;
use crate::transcription::{NlpProblem, ENERGY_UNIT};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Diagnostics {
    /// Recomputed at the point (scaled units).
    pub max_eq_residual: f64,
    pub max_ineq_violation: f64,
    /// Largest difference between reported and recomputed residuals.
    pub residual_mismatch: Option<f64>,
    /// `J_tot` of the decoded trajectory.
    pub transcription_objective: Option<f64>,
    /// `J_tot` of a fresh rollout of the decoded design and controls, with
    /// slacks set to the exact violations.
    pub simulated_objective: Option<f64>,
    /// `|transcription − simulated| / max(|simulated|, 1)`.
    pub objective_gap: Option<f64>,
    /// Largest stored-energy difference between the two trajectories (J).
    pub max_state_gap: Option<f64>,
    /// Largest `|s − violation|` over both slacks (scaled units).
    pub slack_discrepancy: Option<f64>,
    pub errors: Vec<String>,
}

/// Diagnostics for an arbitrary decision vector.
pub fn verify_point(problem: &NlpProblem, z: &[f64]) -> Diagnostics {
    let mut d = Diagnostics {
        max_eq_residual: f64::NAN,
        max_ineq_violation: f64::NAN,
        residual_mismatch: None,
        transcription_objective: None,
        simulated_objective: None,
        objective_gap: None,
        max_state_gap: None,
        slack_discrepancy: None,
        errors: Vec::new(),
    };
    match problem.values(z) {
        Ok(p) => {
            d.max_eq_residual = p.eq.iter().fold(0.0, |m, v| m.max(v.abs()));
            d.max_ineq_violation = p.ineq.iter().fold(0.0, |m, v| m.max(-v));
        }
        Err(e) => d.errors.push(format!("evaluation: {e}")),
    }
    let decoded = match problem.decode(z) {
        Ok(x) => x,
        Err(e) => {
            d.errors.push(format!("decode: {e}"));
            return d;
        }
    };
    let sc = &problem.scenario;
    let bounds = &sc.bounds;
    d.slack_discrepancy = Some(decoded.trajectory.records.iter().fold(0.0f64, |m, r| {
        let (v_d, v_p) = simulate::slacks(bounds, &decoded.design, r.e_d, r.e_pcm);
        m.max((r.s_d - v_d).abs() / ENERGY_UNIT)
            .max((r.s_pcm - v_p).abs() / ENERGY_UNIT)
    }));
    match objective::evaluate(&decoded.trajectory, &sc.weights, &sc.nominal) {
        Ok(b) => d.transcription_objective = Some(b.j_tot),
        Err(e) => d.errors.push(format!("decoded objective: {e}")),
    }
    let simulated = match simulate::rollout(sc, &decoded.design, &decoded.controls) {
        Ok(t) => t,
        Err(e) => {
            d.errors.push(format!("re-simulation: {e}"));
            return d;
        }
    };
    d.max_state_gap = Some(
        decoded
            .trajectory
            .records
            .iter()
            .zip(&simulated.records)
            .fold(0.0f64, |m, (a, b)| {
                m.max((a.e_d - b.e_d).abs()).max((a.e_pcm - b.e_pcm).abs())
            }),
    );
    match objective::evaluate(&simulated, &sc.weights, &sc.nominal) {
        Ok(b) => d.simulated_objective = Some(b.j_tot),
        Err(e) => d.errors.push(format!("simulated objective: {e}")),
    }
    if let (Some(t), Some(s)) = (d.transcription_objective, d.simulated_objective) {
        d.objective_gap = Some((t - s).abs() / s.abs().max(1.0));
    }
    d
}

/// Diagnostics for a solver result, including whether its reported
/// residuals match a fresh evaluation.
pub fn verify(problem: &NlpProblem, result: &SolveResult) -> Diagnostics {
    if result.z_star.is_empty() {
        let mut d = verify_point(problem, &[]);
        d.errors.insert(0, "result carries no solution".into());
        return d;
    }
    let mut d = verify_point(problem, &result.z_star);
    if d.max_eq_residual.is_finite() {
        d.residual_mismatch = Some(
            (d.max_eq_residual - result.max_eq_residual)
                .abs()
                .max((d.max_ineq_violation - result.max_ineq_violation).abs()),
        );
    }
    d
}
