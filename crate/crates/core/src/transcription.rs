//! Direct transcription of the design and control problem into a smooth
//! nonlinear program.
//!
//! The decision vector holds, in order: `C_pcm`, `T_m`, the optimized
//! control channels (one value per interval), then `E_d`, `E_pcm`, `s_d`
//! and `s_pcm` at every knot. The algebraic quantities `T_d`, `SOC`, `P_d`
//! and `P_pcm` are eliminated through the plant's closed-form coolant solve.
//!
//! All variables are scaled (`x = unit · z`, with units of 1e5 J, 1e2 W and
//! 10 °C) and every constraint row is expressed in scaled energy units.
//! Equality rows are the two initial conditions followed by a device and a
//! PCM defect per interval. Each knot
//! contributes four inequality rows, all of the form `g(z) ≥ 0`:
//!
//! ```text
//! E_d − E_d,lb + s_d          E_d,ub − E_d + s_d
//! E_pcm − lb·C_pcm + s_pcm    ub·C_pcm − E_pcm + s_pcm
//! ```

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::objective::{self, Internals, ObjectiveBreakdown, ObjectiveError};
use crate::plant::{
    boundary_unchecked, solve_coolant, solve_coolant_with_sensitivity, wrt, PcmDesign, PlantError,
    ValveCommand,
};
use crate::scenario::{Channel, Scenario};
use crate::simulate::{self, ControlSequence, Disturbance, SimError, StoredEnergy, Trajectory};
use crate::solver::{Nlp, NlpEval};
use crate::sparse::Triplets;

/// Size of one scaled unit: `x = unit · z`.
pub const ENERGY_UNIT: f64 = 1e5;
pub const POWER_UNIT: f64 = 1e2;
pub const TEMPERATURE_UNIT: f64 = 10.0;

#[derive(Debug, Error)]
pub enum TranscriptionError {
    #[error("assembly: {0}")]
    Assembly(String),
    #[error("decision vector has length {got}, expected {expected}")]
    Length { got: usize, expected: usize },
    #[error("evaluation failed at knot {knot}: {source}")]
    Plant {
        knot: usize,
        #[source]
        source: PlantError,
    },
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
    #[error(transparent)]
    Simulation(#[from] SimError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DerivativeMode {
    #[default]
    Analytic,
    /// Central differences on scaled variables, one-sided at bounds.
    FiniteDifference,
}

/// A named contiguous run of decision variables.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Block {
    pub name: &'static str,
    pub start: usize,
    pub len: usize,
}

/// Index map of the decision vector.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Layout {
    pub n_knots: usize,
    pub c_pcm: usize,
    pub t_m: usize,
    pub q_hx: Option<usize>,
    pub v1: Option<usize>,
    pub v2: Option<usize>,
    pub e_d: usize,
    pub e_pcm: usize,
    pub s_d: usize,
    pub s_pcm: usize,
    pub n_vars: usize,
}

impl Layout {
    pub fn new(n_knots: usize, q_hx: Channel, v1: Channel, v2: Channel) -> Self {
        let intervals = n_knots - 1;
        let mut next = 2;
        let mut take = |optimized: bool, len: usize| {
            optimized.then(|| {
                let start = next;
                next += len;
                start
            })
        };
        let q_hx = take(q_hx.is_optimized(), intervals);
        let v1 = take(v1.is_optimized(), intervals);
        let v2 = take(v2.is_optimized(), intervals);
        let e_d = next;
        Self {
            n_knots,
            c_pcm: 0,
            t_m: 1,
            q_hx,
            v1,
            v2,
            e_d,
            e_pcm: e_d + n_knots,
            s_d: e_d + 2 * n_knots,
            s_pcm: e_d + 3 * n_knots,
            n_vars: e_d + 4 * n_knots,
        }
    }

    pub fn intervals(&self) -> usize {
        self.n_knots - 1
    }

    pub fn n_controls(&self) -> usize {
        self.e_d - 2
    }

    pub fn blocks(&self) -> Vec<Block> {
        let m = self.intervals();
        let n = self.n_knots;
        let mut out = vec![
            Block {
                name: "C_pcm",
                start: self.c_pcm,
                len: 1,
            },
            Block {
                name: "T_m",
                start: self.t_m,
                len: 1,
            },
        ];
        for (name, start) in [("Q_hx", self.q_hx), ("v1", self.v1), ("v2", self.v2)] {
            if let Some(start) = start {
                out.push(Block {
                    name,
                    start,
                    len: m,
                });
            }
        }
        out.extend([
            Block {
                name: "E_d",
                start: self.e_d,
                len: n,
            },
            Block {
                name: "E_pcm",
                start: self.e_pcm,
                len: n,
            },
            Block {
                name: "s_d",
                start: self.s_d,
                len: n,
            },
            Block {
                name: "s_pcm",
                start: self.s_pcm,
                len: n,
            },
        ]);
        out
    }

    /// Human-readable name of a decision variable, e.g. `E_d[3]`.
    pub fn name(&self, index: usize) -> Option<String> {
        self.blocks()
            .into_iter()
            .find(|b| (b.start..b.start + b.len).contains(&index))
            .map(|b| {
                if b.len == 1 && matches!(b.name, "C_pcm" | "T_m") {
                    b.name.to_string()
                } else {
                    format!("{}[{}]", b.name, index - b.start)
                }
            })
    }
}

/// The assembled program. Bounds are on scaled variables; `±∞` marks
/// an unbounded side.
#[derive(Debug, Clone)]
pub struct NlpProblem {
    pub scenario: Scenario,
    pub layout: Layout,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// `x_i = unit_i · z_i`.
    pub unit: Vec<f64>,
    pub n_eq: usize,
    pub n_ineq: usize,
    /// Multiplies `J_tot` to give the scaled objective.
    pub objective_scale: f64,
    pub mode: DerivativeMode,
}

/// Objective, constraints and first derivatives at one scaled point.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalPoint {
    pub z: Vec<f64>,
    /// Scaled objective `objective_scale · J_tot`.
    pub objective: f64,
    pub breakdown: ObjectiveBreakdown,
    pub eq: Vec<f64>,
    /// Inequality values; feasible when all are nonnegative.
    pub ineq: Vec<f64>,
    pub gradient: Vec<f64>,
    pub jac_eq: Triplets,
    pub jac_ineq: Triplets,
}

/// Design, full control sequences and trajectory recovered from `z`.
#[derive(Debug, Clone, PartialEq)]
pub struct Decoded {
    pub design: PcmDesign,
    pub controls: ControlSequence,
    pub trajectory: Trajectory,
}

#[derive(Debug, Serialize)]
struct ProblemDump<'a> {
    n_vars: usize,
    n_eq: usize,
    n_ineq: usize,
    n_knots: usize,
    blocks: Vec<Block>,
    /// Unscaled bounds; `null` is unbounded.
    lower: Vec<Option<f64>>,
    upper: Vec<Option<f64>>,
    unit: &'a [f64],
    objective_scale: f64,
    mode: DerivativeMode,
}

pub fn assemble(scenario: &Scenario) -> Result<NlpProblem, TranscriptionError> {
    scenario
        .validate()
        .map_err(|e| TranscriptionError::Assembly(e.to_string()))?;
    let n = scenario.n_knots();
    let p = &scenario.policy;
    let layout = Layout::new(n, p.q_hx, p.v1, p.v2);
    let b = &scenario.bounds;

    let nv = layout.n_vars;
    let mut lower = vec![f64::NEG_INFINITY; nv];
    let mut upper = vec![f64::INFINITY; nv];
    let mut unit = vec![ENERGY_UNIT; nv];
    let mut set = |i: usize, lb: f64, ub: f64, u: f64| {
        unit[i] = u;
        lower[i] = lb / u;
        upper[i] = ub / u;
    };
    set(layout.c_pcm, b.c_pcm_lb, b.c_pcm_ub, ENERGY_UNIT);
    set(layout.t_m, b.t_m_lb, b.t_m_ub, TEMPERATURE_UNIT);
    for k in 0..layout.intervals() {
        if let Some(s) = layout.q_hx {
            set(s + k, b.q_hx_lb, b.q_hx_ub, POWER_UNIT);
        }
        for start in [layout.v1, layout.v2].into_iter().flatten() {
            set(start + k, b.v_lb, b.v_ub, 1.0);
        }
    }
    for k in 0..n {
        set(layout.s_d + k, 0.0, f64::INFINITY, ENERGY_UNIT);
        set(layout.s_pcm + k, 0.0, f64::INFINITY, ENERGY_UNIT);
    }

    let mut problem = NlpProblem {
        scenario: scenario.clone(),
        n_eq: 2 * n,
        n_ineq: 4 * n,
        layout,
        lower,
        upper,
        unit,
        objective_scale: 1.0,
        mode: DerivativeMode::Analytic,
    };
    problem.objective_scale = problem.nominal_objective_scale();
    Ok(problem)
}

impl NlpProblem {
    pub fn n_vars(&self) -> usize {
        self.layout.n_vars
    }

    pub fn with_mode(mut self, mode: DerivativeMode) -> Self {
        self.mode = mode;
        self
    }

    /// `1 / ‖∇J_tot‖∞` at the centre of the design and control boxes, so
    /// the scaled objective gradient is O(1) there.
    fn nominal_objective_scale(&self) -> f64 {
        let b = &self.scenario.bounds;
        let design = PcmDesign {
            c_pcm: 0.5 * (b.c_pcm_lb + b.c_pcm_ub),
            t_m: 0.5 * (b.t_m_lb + b.t_m_ub),
        };
        let candidates = [
            self.controls_from(|lb, ub| 0.5 * (lb + ub)),
            self.controls_from(|lb, _| lb),
        ];
        for controls in candidates {
            let Ok(z) = self.warm_start(&design, &controls) else {
                continue;
            };
            let Ok(point) = self.evaluate_analytic(&z, true) else {
                continue;
            };
            let norm = point.gradient.iter().fold(0.0f64, |m, g| m.max(g.abs()));
            if norm.is_finite() && norm > 0.0 {
                return 1.0 / norm;
            }
        }
        1.0
    }

    /// Full control sequences with every optimized channel set by `pick`.
    fn controls_from(&self, pick: impl Fn(f64, f64) -> f64) -> ControlSequence {
        let b = &self.scenario.bounds;
        let p = &self.scenario.policy;
        let m = self.layout.intervals();
        let value = |ch: Channel, lb, ub| ch.fixed_value().unwrap_or_else(|| pick(lb, ub));
        ControlSequence::constant(
            m,
            value(p.q_hx, b.q_hx_lb, b.q_hx_ub),
            value(p.v1, b.v_lb, b.v_ub),
            value(p.v2, b.v_lb, b.v_ub),
        )
    }

    fn check_len(&self, z: &[f64]) -> Result<(), TranscriptionError> {
        if z.len() != self.n_vars() {
            return Err(TranscriptionError::Length {
                got: z.len(),
                expected: self.n_vars(),
            });
        }
        Ok(())
    }

    fn design_of(&self, z: &[f64]) -> PcmDesign {
        PcmDesign {
            c_pcm: z[self.layout.c_pcm] * ENERGY_UNIT,
            t_m: z[self.layout.t_m] * TEMPERATURE_UNIT,
        }
    }

    fn control_at(&self, z: &[f64], k: usize) -> (f64, ValveCommand) {
        let p = &self.scenario.policy;
        let l = &self.layout;
        let q = l.q_hx.map_or_else(
            || p.q_hx.fixed_value().unwrap_or(0.0),
            |s| z[s + k] * POWER_UNIT,
        );
        let v1 =
            l.v1.map_or_else(|| p.v1.fixed_value().unwrap_or(0.0), |s| z[s + k]);
        let v2 =
            l.v2.map_or_else(|| p.v2.fixed_value().unwrap_or(0.0), |s| z[s + k]);
        (q, ValveCommand { v1, v2 })
    }

    /// Encodes a design, controls and a trajectory. Slacks are taken from
    /// the trajectory records.
    pub fn encode(
        &self,
        design: &PcmDesign,
        controls: &ControlSequence,
        trajectory: &Trajectory,
    ) -> Result<Vec<f64>, TranscriptionError> {
        let l = &self.layout;
        let m = l.intervals();
        if controls.len() != m || trajectory.n_knots() != l.n_knots {
            return Err(TranscriptionError::Assembly(format!(
                "expected {m} control intervals and {} knots, got {} and {}",
                l.n_knots,
                controls.len(),
                trajectory.n_knots()
            )));
        }
        let mut z = vec![0.0; l.n_vars];
        z[l.c_pcm] = design.c_pcm / ENERGY_UNIT;
        z[l.t_m] = design.t_m / TEMPERATURE_UNIT;
        for k in 0..m {
            if let Some(s) = l.q_hx {
                z[s + k] = controls.q_hx[k] / POWER_UNIT;
            }
            if let Some(s) = l.v1 {
                z[s + k] = controls.v1[k];
            }
            if let Some(s) = l.v2 {
                z[s + k] = controls.v2[k];
            }
        }
        for (k, r) in trajectory.records.iter().enumerate() {
            z[l.e_d + k] = r.e_d / ENERGY_UNIT;
            z[l.e_pcm + k] = r.e_pcm / ENERGY_UNIT;
            z[l.s_d + k] = r.s_d / ENERGY_UNIT;
            z[l.s_pcm + k] = r.s_pcm / ENERGY_UNIT;
        }
        Ok(z)
    }

    /// Rolls out `controls` from the initial condition and encodes the
    /// result with exact slacks, so every defect row vanishes.
    pub fn warm_start(
        &self,
        design: &PcmDesign,
        controls: &ControlSequence,
    ) -> Result<Vec<f64>, TranscriptionError> {
        let traj = simulate::rollout(&self.scenario, design, controls)?;
        self.encode(design, controls, &traj)
    }

    /// Recovers the design, the full control sequences (fixed channels
    /// included) and a trajectory whose slacks are the decision values.
    pub fn decode(&self, z: &[f64]) -> Result<Decoded, TranscriptionError> {
        self.check_len(z)?;
        let l = &self.layout;
        let m = l.intervals();
        let design = self.design_of(z);
        let mut controls = ControlSequence::constant(m, 0.0, 0.0, 0.0);
        for k in 0..m {
            let (q, v) = self.control_at(z, k);
            controls.q_hx[k] = q;
            controls.v1[k] = v.v1;
            controls.v2[k] = v.v2;
        }
        let profile = &self.scenario.profile;
        let mut records = Vec::with_capacity(l.n_knots);
        for k in 0..l.n_knots {
            let (q, v) = self.control_at(z, k.min(m - 1));
            let state = StoredEnergy {
                e_d: z[l.e_d + k] * ENERGY_UNIT,
                e_pcm: z[l.e_pcm + k] * ENERGY_UNIT,
            };
            let disturbance = Disturbance {
                g: profile.g[k],
                t_inf: profile.t_inf[k],
            };
            let mut rec =
                simulate::evaluate_knot(&self.scenario, &design, state, q, v, disturbance)
                    .map_err(|source| TranscriptionError::Plant { knot: k, source })?;
            rec.t = profile.time(k);
            rec.s_d = z[l.s_d + k] * ENERGY_UNIT;
            rec.s_pcm = z[l.s_pcm + k] * ENERGY_UNIT;
            records.push(rec);
        }
        Ok(Decoded {
            design,
            controls,
            trajectory: Trajectory {
                dt: profile.dt,
                design,
                records,
            },
        })
    }

    /// Replaces states by a rollout of the decoded design and controls and
    /// sets every slack to its exact violation.
    pub fn project_onto_dynamics(&self, z: &[f64]) -> Result<Vec<f64>, TranscriptionError> {
        let decoded = self.decode(z)?;
        self.warm_start(&decoded.design, &decoded.controls)
    }

    /// Sets each slack to the exact bound violation of its state.
    pub fn tighten_slacks(&self, z: &mut [f64]) {
        let l = &self.layout;
        let design = self.design_of(z);
        for k in 0..l.n_knots {
            let (s_d, s_pcm) = simulate::slacks(
                &self.scenario.bounds,
                &design,
                z[l.e_d + k] * ENERGY_UNIT,
                z[l.e_pcm + k] * ENERGY_UNIT,
            );
            z[l.s_d + k] = s_d / ENERGY_UNIT;
            z[l.s_pcm + k] = s_pcm / ENERGY_UNIT;
        }
    }

    pub fn eval(&self, z: &[f64]) -> Result<EvalPoint, TranscriptionError> {
        self.check_len(z)?;
        match self.mode {
            DerivativeMode::Analytic => self.evaluate_analytic(z, true),
            DerivativeMode::FiniteDifference => self.evaluate_fd(z),
        }
    }

    /// Objective and constraint values only.
    pub fn values(&self, z: &[f64]) -> Result<EvalPoint, TranscriptionError> {
        self.check_len(z)?;
        self.evaluate_analytic(z, false)
    }

    fn evaluate_analytic(&self, z: &[f64], derivs: bool) -> Result<EvalPoint, TranscriptionError> {
        let sc = &self.scenario;
        let params = &sc.params;
        let bounds = &sc.bounds;
        let w = &sc.weights;
        let l = &self.layout;
        let n = l.n_knots;
        let m = l.intervals();
        let nv = l.n_vars;
        let dt = sc.profile.dt;
        let eu = ENERGY_UNIT;

        let design = self.design_of(z);
        let e_d = |k: usize| z[l.e_d + k] * eu;
        let e_p = |k: usize| z[l.e_pcm + k] * eu;

        let mut eq = vec![0.0; self.n_eq];
        let mut ineq = vec![0.0; self.n_ineq];
        let mut jac_eq = Triplets::new(self.n_eq, nv);
        let mut jac_ineq = Triplets::new(self.n_ineq, nv);
        // Gradient of J_d with respect to unscaled variables.
        let mut grad_d = vec![0.0; nv];

        eq[0] = (e_d(0) - sc.initial.e_d) / eu;
        eq[1] = (e_p(0) - sc.initial.soc * design.c_pcm) / eu;
        if derivs {
            jac_eq.push(0, l.e_d, 1.0);
            jac_eq.push(1, l.e_pcm, 1.0);
            jac_eq.push(1, l.c_pcm, -sc.initial.soc);
        }

        let (mut q_sum, mut p_sum) = (0.0, 0.0);
        let loss_slope = params.h_inf * params.a_s;
        for k in 0..m {
            let (q, v) = self.control_at(z, k);
            let t_d = e_d(k) / params.c_d;
            let at_knot = |source| TranscriptionError::Plant { knot: k, source };
            let (sol, sens) = if derivs {
                let (sol, sens) =
                    solve_coolant_with_sensitivity(params, &design, t_d, v, q).map_err(at_knot)?;
                (sol, Some(sens))
            } else {
                (
                    solve_coolant(params, &design, t_d, v, q).map_err(at_knot)?,
                    None,
                )
            };
            let heat = boundary_unchecked(params, sc.profile.g[k], sc.profile.t_inf[k], t_d);
            let r_d = e_d(k + 1) - e_d(k) - dt * (heat.q_in - heat.q_out - sol.p_d);
            let r_p = e_p(k + 1) - e_p(k) - dt * sol.p_pcm;
            let (row_d, row_p) = (2 + 2 * k, 3 + 2 * k);
            eq[row_d] = r_d / eu;
            eq[row_p] = r_p / eu;
            q_sum += q;
            p_sum += sol.p_d;

            let Some(s) = sens else { continue };
            let (sd, sp) = (s.p_d, s.p_pcm);
            // Scaled row, scaled column: ∂(R/eu)/∂x · unit.
            jac_eq.push(
                row_d,
                l.e_d + k,
                -1.0 + dt * (loss_slope + sd[wrt::T_D]) / params.c_d,
            );
            jac_eq.push(row_d, l.e_d + k + 1, 1.0);
            jac_eq.push(row_d, l.t_m, dt * sd[wrt::T_M] * TEMPERATURE_UNIT / eu);
            jac_eq.push(row_p, l.e_d + k, -dt * sp[wrt::T_D] / params.c_d);
            jac_eq.push(row_p, l.e_pcm + k, -1.0);
            jac_eq.push(row_p, l.e_pcm + k + 1, 1.0);
            jac_eq.push(row_p, l.t_m, -dt * sp[wrt::T_M] * TEMPERATURE_UNIT / eu);
            for (start, idx, col_unit) in [
                (l.q_hx, wrt::Q_HX, POWER_UNIT),
                (l.v1, wrt::V1, 1.0),
                (l.v2, wrt::V2, 1.0),
            ] {
                if let Some(start) = start {
                    jac_eq.push(row_d, start + k, dt * sd[idx] * col_unit / eu);
                    jac_eq.push(row_p, start + k, -dt * sp[idx] * col_unit / eu);
                    grad_d[start + k] -= w.w_ce * dt * sd[idx];
                }
            }
            if let Some(start) = l.q_hx {
                grad_d[start + k] += w.w_ie * dt;
            }
            grad_d[l.e_d + k] -= w.w_ce * dt * sd[wrt::T_D] / params.c_d;
            grad_d[l.t_m] -= w.w_ce * dt * sd[wrt::T_M];
        }

        let (lbf, ubf) = (bounds.e_pcm_lb_frac, bounds.e_pcm_ub_frac);
        let c = design.c_pcm;
        let (mut sd_sum, mut sp_sum) = (0.0, 0.0);
        for k in 0..n {
            let s_d = z[l.s_d + k] * eu;
            let s_p = z[l.s_pcm + k] * eu;
            if k < m {
                sd_sum += s_d;
                sp_sum += s_p;
            }
            let r = 4 * k;
            ineq[r] = (e_d(k) - bounds.e_d_lb + s_d) / eu;
            ineq[r + 1] = (bounds.e_d_ub - e_d(k) + s_d) / eu;
            ineq[r + 2] = (e_p(k) - lbf * c + s_p) / eu;
            ineq[r + 3] = (ubf * c - e_p(k) + s_p) / eu;
            if derivs {
                jac_ineq.push(r, l.e_d + k, 1.0);
                jac_ineq.push(r, l.s_d + k, 1.0);
                jac_ineq.push(r + 1, l.e_d + k, -1.0);
                jac_ineq.push(r + 1, l.s_d + k, 1.0);
                jac_ineq.push(r + 2, l.e_pcm + k, 1.0);
                jac_ineq.push(r + 2, l.c_pcm, -lbf);
                jac_ineq.push(r + 2, l.s_pcm + k, 1.0);
                jac_ineq.push(r + 3, l.e_pcm + k, -1.0);
                jac_ineq.push(r + 3, l.c_pcm, ubf);
                jac_ineq.push(r + 3, l.s_pcm + k, 1.0);
            }
        }

        let t_f = sc.profile.horizon();
        let avg = dt / t_f;
        let internals = Internals {
            j_ie: q_sum * dt,
            j_ce: -p_sum * dt,
            j_cv_d: sd_sum * avg,
            j_cv_pcm: sp_sum * avg,
            j_m: c,
            j_nom: -sc.nominal.p_pcm_nom * sc.nominal.t_nom,
        };
        let breakdown = ObjectiveBreakdown::from_internals(internals, w)?;

        let mut gradient = vec![0.0; nv];
        if derivs {
            for k in 0..m {
                grad_d[l.s_d + k] += w.w_cv_d * avg;
                grad_d[l.s_pcm + k] += w.w_cv_p * avg;
            }
            let a = outer_slope(w.w_d, breakdown.j_d, w.n);
            let b = outer_slope(w.w_s, breakdown.j_s, w.n);
            for j in 0..nv {
                gradient[j] = a * grad_d[j];
            }
            gradient[l.c_pcm] += b * w.w_m;
            for (g, u) in gradient.iter_mut().zip(&self.unit) {
                *g *= self.objective_scale * u;
            }
        }

        Ok(EvalPoint {
            z: z.to_vec(),
            objective: self.objective_scale * breakdown.j_tot,
            breakdown,
            eq,
            ineq,
            gradient,
            jac_eq,
            jac_ineq,
        })
    }

    fn evaluate_fd(&self, z: &[f64]) -> Result<EvalPoint, TranscriptionError> {
        let base = self.evaluate_analytic(z, false)?;
        let columns: Vec<(f64, Vec<f64>, Vec<f64>)> = (0..self.n_vars())
            .into_par_iter()
            .map(|j| {
                let h = 1e-6 * z[j].abs().max(1.0);
                let (lo, hi) = (z[j] - h, z[j] + h);
                let (a, b) = match (lo >= self.lower[j], hi <= self.upper[j]) {
                    (true, true) => (lo, hi),
                    (false, _) => (z[j], hi),
                    (true, false) => (lo, z[j]),
                };
                let at = |x: f64| {
                    let mut p = z.to_vec();
                    p[j] = x;
                    self.evaluate_analytic(&p, false)
                };
                let (pa, pb) = (at(a)?, at(b)?);
                let d = b - a;
                let diff = |u: &[f64], v: &[f64]| -> Vec<f64> {
                    u.iter().zip(v).map(|(u, v)| (v - u) / d).collect()
                };
                Ok((
                    (pb.objective - pa.objective) / d,
                    diff(&pa.eq, &pb.eq),
                    diff(&pa.ineq, &pb.ineq),
                ))
            })
            .collect::<Result<_, TranscriptionError>>()?;

        let nv = self.n_vars();
        let mut jac_eq = Triplets::new(self.n_eq, nv);
        let mut jac_ineq = Triplets::new(self.n_ineq, nv);
        let mut gradient = vec![0.0; nv];
        for (j, (g, de, di)) in columns.iter().enumerate() {
            gradient[j] = *g;
            for (r, &v) in de.iter().enumerate() {
                if v != 0.0 {
                    jac_eq.push(r, j, v);
                }
            }
            for (r, &v) in di.iter().enumerate() {
                if v != 0.0 {
                    jac_ineq.push(r, j, v);
                }
            }
        }
        Ok(EvalPoint {
            gradient,
            jac_eq,
            jac_ineq,
            ..base
        })
    }

    /// Random design and controls inside their boxes, with states from a
    /// rollout and exact slacks.
    pub fn sample_start(&self, rng: &mut ChaCha8Rng) -> Result<Vec<f64>, TranscriptionError> {
        let b = &self.scenario.bounds;
        let mut uniform = |lb: f64, ub: f64| {
            if lb < ub {
                rng.random_range(lb..=ub)
            } else {
                lb
            }
        };
        let design = PcmDesign {
            c_pcm: uniform(b.c_pcm_lb, b.c_pcm_ub),
            t_m: uniform(b.t_m_lb, b.t_m_ub),
        };
        let p = &self.scenario.policy;
        let m = self.layout.intervals();
        let mut controls = ControlSequence::constant(m, 0.0, 0.0, 0.0);
        for k in 0..m {
            controls.q_hx[k] = p
                .q_hx
                .fixed_value()
                .unwrap_or_else(|| uniform(b.q_hx_lb, b.q_hx_ub));
            controls.v1[k] =
                p.v1.fixed_value()
                    .unwrap_or_else(|| uniform(b.v_lb, b.v_ub));
            controls.v2[k] =
                p.v2.fixed_value()
                    .unwrap_or_else(|| uniform(b.v_lb, b.v_ub));
        }
        self.warm_start(&design, &controls)
    }

    /// Objective breakdown of the decoded trajectory, through the objective
    /// module rather than the transcription sums.
    pub fn decoded_objective(&self, z: &[f64]) -> Result<ObjectiveBreakdown, TranscriptionError> {
        let decoded = self.decode(z)?;
        Ok(objective::evaluate(
            &decoded.trajectory,
            &self.scenario.weights,
            &self.scenario.nominal,
        )?)
    }

    /// JSON description of the layout, bounds and row counts.
    pub fn dump_json(&self) -> String {
        let unscale = |v: &[f64]| -> Vec<Option<f64>> {
            v.iter()
                .zip(&self.unit)
                .map(|(z, u)| z.is_finite().then_some(z * u))
                .collect()
        };
        let dump = ProblemDump {
            n_vars: self.n_vars(),
            n_eq: self.n_eq,
            n_ineq: self.n_ineq,
            n_knots: self.layout.n_knots,
            blocks: self.layout.blocks(),
            lower: unscale(&self.lower),
            upper: unscale(&self.upper),
            unit: &self.unit,
            objective_scale: self.objective_scale,
            mode: self.mode,
        };
        serde_json::to_string_pretty(&dump).expect("problem dump serializes")
    }
}

/// `d(w·J^n)/dJ`.
fn outer_slope(weight: f64, value: f64, n: f64) -> f64 {
    if weight == 0.0 {
        0.0
    } else if n == 1.0 {
        weight
    } else {
        weight * n * value.max(0.0).powf(n - 1.0)
    }
}

impl Nlp for NlpProblem {
    fn n_vars(&self) -> usize {
        self.layout.n_vars
    }

    fn lower(&self) -> &[f64] {
        &self.lower
    }

    fn upper(&self) -> &[f64] {
        &self.upper
    }

    fn n_eq(&self) -> usize {
        self.n_eq
    }

    fn n_ineq(&self) -> usize {
        self.n_ineq
    }

    fn evaluate(&self, z: &[f64]) -> Result<NlpEval, String> {
        let p = self.eval(z).map_err(|e| e.to_string())?;
        Ok(NlpEval {
            f: p.objective,
            grad: p.gradient,
            eq: p.eq,
            ineq: p.ineq,
            jac_eq: p.jac_eq,
            jac_ineq: p.jac_ineq,
        })
    }

    fn initial_point(&self, rng: &mut ChaCha8Rng) -> Result<Vec<f64>, String> {
        self.sample_start(rng).map_err(|e| e.to_string())
    }

    fn report_objective(&self, f: f64) -> f64 {
        f / self.objective_scale
    }

    /// States are re-rolled from the design and controls, which are the
    /// real decisions; the final-knot slacks carry no cost, so tightening
    /// them to the violation changes nothing else.
    fn polish(&self, z: &mut [f64]) {
        match self.project_onto_dynamics(z) {
            Ok(p) => z.copy_from_slice(&p),
            Err(_) => self.tighten_slacks(z),
        }
    }

    fn breakdown(&self, z: &[f64]) -> Option<ObjectiveBreakdown> {
        self.values(z).ok().map(|p| p.breakdown)
    }
}
