//! Energy-based objectives: four dynamic internals integrated over the
//! trajectory, two static internals of the PCM design, and their weighted
//! aggregation.
//!
//! Integrals use the left-endpoint rectangle rule over the `N − 1`
//! intervals, the same quadrature implied by the forward-Euler dynamics.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::plant::PcmDesign;
use crate::scenario::{NominalDuty, Weights};
use crate::simulate::Trajectory;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ObjectiveError {
    #[error(
        "compromise exponent n = {n} needs nonnegative aggregates, got {which} = {value:.6e}; \
         rebalance the internal weights"
    )]
    NegativeAggregate {
        n: f64,
        which: &'static str,
        value: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DynamicTerms {
    pub j_ie: f64,
    pub j_ce: f64,
    pub j_cv_d: f64,
    pub j_cv_pcm: f64,
    pub j_d: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StaticTerms {
    pub j_m: f64,
    pub j_nom: f64,
    pub j_s: f64,
}

/// Every internal objective and the aggregates, all in joules except
/// `j_tot`, which carries the outer weights.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveBreakdown {
    pub j_ie: f64,
    pub j_ce: f64,
    pub j_cv_d: f64,
    pub j_cv_pcm: f64,
    pub j_m: f64,
    pub j_nom: f64,
    pub j_d: f64,
    pub j_s: f64,
    pub j_tot: f64,
}

/// The six internal objectives, before weighting.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Internals {
    pub j_ie: f64,
    pub j_ce: f64,
    pub j_cv_d: f64,
    pub j_cv_pcm: f64,
    pub j_m: f64,
    pub j_nom: f64,
}

pub fn dynamic_aggregate(i: &Internals, w: &Weights) -> f64 {
    w.w_ie * i.j_ie + w.w_ce * i.j_ce + w.w_cv_d * i.j_cv_d + w.w_cv_p * i.j_cv_pcm
}

pub fn static_aggregate(i: &Internals, w: &Weights) -> f64 {
    w.w_m * i.j_m + w.w_nom * i.j_nom
}

pub fn dynamic_objectives(traj: &Trajectory, weights: &Weights) -> DynamicTerms {
    let intervals = traj.n_knots().saturating_sub(1);
    let dt = traj.dt;
    let t_f = traj.horizon();
    let (mut q, mut p, mut sd, mut sp) = (0.0, 0.0, 0.0, 0.0);
    for r in &traj.records[..intervals] {
        q += r.q_hx;
        p += r.p_d;
        sd += r.s_d;
        sp += r.s_pcm;
    }
    let avg = if t_f > 0.0 { dt / t_f } else { 0.0 };
    let internals = Internals {
        j_ie: q * dt,
        j_ce: -p * dt,
        j_cv_d: sd * avg,
        j_cv_pcm: sp * avg,
        j_m: 0.0,
        j_nom: 0.0,
    };
    DynamicTerms {
        j_ie: internals.j_ie,
        j_ce: internals.j_ce,
        j_cv_d: internals.j_cv_d,
        j_cv_pcm: internals.j_cv_pcm,
        j_d: dynamic_aggregate(&internals, weights),
    }
}

pub fn static_objectives(
    design: &PcmDesign,
    weights: &Weights,
    p_pcm_nom: f64,
    t_nom: f64,
) -> StaticTerms {
    let j_m = design.c_pcm;
    let j_nom = -p_pcm_nom * t_nom;
    StaticTerms {
        j_m,
        j_nom,
        j_s: weights.w_m * j_m + weights.w_nom * j_nom,
    }
}

fn power(value: f64, n: f64, which: &'static str) -> Result<f64, ObjectiveError> {
    if n == 1.0 {
        Ok(value)
    } else if value < 0.0 {
        Err(ObjectiveError::NegativeAggregate { n, which, value })
    } else {
        Ok(value.powf(n))
    }
}

/// `w_d·J_d^n + w_s·J_s^n`.
pub fn total_objective(j_d: f64, j_s: f64, weights: &Weights) -> Result<f64, ObjectiveError> {
    let d = if weights.w_d == 0.0 {
        0.0
    } else {
        weights.w_d * power(j_d, weights.n, "J_d")?
    };
    let s = if weights.w_s == 0.0 {
        0.0
    } else {
        weights.w_s * power(j_s, weights.n, "J_s")?
    };
    Ok(d + s)
}

impl ObjectiveBreakdown {
    /// Aggregates a set of internals under `weights`.
    pub fn from_internals(i: Internals, weights: &Weights) -> Result<Self, ObjectiveError> {
        let j_d = dynamic_aggregate(&i, weights);
        let j_s = static_aggregate(&i, weights);
        Ok(Self {
            j_ie: i.j_ie,
            j_ce: i.j_ce,
            j_cv_d: i.j_cv_d,
            j_cv_pcm: i.j_cv_pcm,
            j_m: i.j_m,
            j_nom: i.j_nom,
            j_d,
            j_s,
            j_tot: total_objective(j_d, j_s, weights)?,
        })
    }

    pub fn internals(&self) -> Internals {
        Internals {
            j_ie: self.j_ie,
            j_ce: self.j_ce,
            j_cv_d: self.j_cv_d,
            j_cv_pcm: self.j_cv_pcm,
            j_m: self.j_m,
            j_nom: self.j_nom,
        }
    }
}

pub fn evaluate(
    traj: &Trajectory,
    weights: &Weights,
    nominal: &NominalDuty,
) -> Result<ObjectiveBreakdown, ObjectiveError> {
    let d = dynamic_objectives(traj, weights);
    let s = static_objectives(&traj.design, weights, nominal.p_pcm_nom, nominal.t_nom);
    ObjectiveBreakdown::from_internals(
        Internals {
            j_ie: d.j_ie,
            j_ce: d.j_ce,
            j_cv_d: d.j_cv_d,
            j_cv_pcm: d.j_cv_pcm,
            j_m: s.j_m,
            j_nom: s.j_nom,
        },
        weights,
    )
}

/// JSON export: the breakdown plus the weights that produced it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveReport {
    #[serde(flatten)]
    pub breakdown: ObjectiveBreakdown,
    pub weights: Weights,
}

impl ObjectiveReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}
