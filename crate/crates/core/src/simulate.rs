//! Forward-Euler marching of the device and PCM energies.
//!
//! The update is the same one the transcription imposes as defect
//! constraints, so a rollout and a converged transcription agree to
//! round-off. Disturbances and controls are held over each interval.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::plant::{
    boundary_unchecked, solve_coolant, CoolantState, HeatFlows, PcmDesign, PlantError, ValveCommand,
};
use crate::scenario::{Bounds, Channel, ControlPolicy, Scenario};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("knot {knot}: {source}")]
    Plant {
        knot: usize,
        #[source]
        source: PlantError,
    },
    #[error("controls: {0}")]
    Controls(String),
    #[error("trajectory export: {0}")]
    Export(String),
}

/// Per-interval control inputs (length `N − 1` each).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlSequence {
    pub q_hx: Vec<f64>,
    pub v1: Vec<f64>,
    pub v2: Vec<f64>,
}

impl ControlSequence {
    pub fn constant(intervals: usize, q_hx: f64, v1: f64, v2: f64) -> Self {
        Self {
            q_hx: vec![q_hx; intervals],
            v1: vec![v1; intervals],
            v2: vec![v2; intervals],
        }
    }

    /// Constant controls from an all-fixed policy.
    pub fn from_fixed_policy(policy: &ControlPolicy, intervals: usize) -> Result<Self, SimError> {
        let value = |name: &str, ch: Channel| {
            ch.fixed_value().ok_or_else(|| {
                SimError::Controls(format!(
                    "{name} is optimized; simulation needs fixed controls"
                ))
            })
        };
        Ok(Self::constant(
            intervals,
            value("q_hx", policy.q_hx)?,
            value("v1", policy.v1)?,
            value("v2", policy.v2)?,
        ))
    }

    pub fn len(&self) -> usize {
        self.q_hx.len()
    }

    pub fn is_empty(&self) -> bool {
        self.q_hx.is_empty()
    }

    pub fn at(&self, k: usize) -> (f64, ValveCommand) {
        (
            self.q_hx[k],
            ValveCommand {
                v1: self.v1[k],
                v2: self.v2[k],
            },
        )
    }

    pub fn validate(&self, bounds: &Bounds, intervals: usize) -> Result<(), SimError> {
        if self.q_hx.len() != intervals || self.v1.len() != intervals || self.v2.len() != intervals
        {
            return Err(SimError::Controls(format!(
                "expected {intervals} values per channel, got {}/{}/{}",
                self.q_hx.len(),
                self.v1.len(),
                self.v2.len()
            )));
        }
        let within = |x: f64, lb: f64, ub: f64| lb <= x && x <= ub;
        for k in 0..intervals {
            if !within(self.q_hx[k], bounds.q_hx_lb, bounds.q_hx_ub) {
                return Err(SimError::Controls(format!(
                    "Q_hx[{k}] = {} outside [{}, {}]",
                    self.q_hx[k], bounds.q_hx_lb, bounds.q_hx_ub
                )));
            }
            for (name, v) in [("v1", self.v1[k]), ("v2", self.v2[k])] {
                if !within(v, bounds.v_lb, bounds.v_ub) {
                    return Err(SimError::Controls(format!(
                        "{name}[{k}] = {v} outside [{}, {}]",
                        bounds.v_lb, bounds.v_ub
                    )));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StoredEnergy {
    pub e_d: f64,
    pub e_pcm: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Disturbance {
    pub g: f64,
    pub t_inf: f64,
}

/// Everything known at one knot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KnotRecord {
    pub t: f64,
    pub e_d: f64,
    pub e_pcm: f64,
    pub t_d: f64,
    pub soc: f64,
    pub p_d: f64,
    pub p_pcm: f64,
    pub q_hx: f64,
    pub v1: f64,
    pub v2: f64,
    pub q_in: f64,
    pub q_out: f64,
    pub s_d: f64,
    pub s_pcm: f64,
    pub coolant: CoolantState,
}

impl KnotRecord {
    pub fn heat_flows(&self) -> HeatFlows {
        HeatFlows {
            p_d: self.p_d,
            p_pcm: self.p_pcm,
            q_hx: self.q_hx,
            q_in: self.q_in,
            q_out: self.q_out,
        }
    }
}

pub const TRAJECTORY_COLUMNS: [&str; 19] = [
    "t_s", "E_d", "E_pcm", "T_d", "SOC", "P_d", "P_pcm", "Q_hx", "v1", "v2", "Q_in", "Q_out",
    "s_d", "s_pcm", "T_c_j1", "T_c_d", "T_c_hx", "T_c_j2", "T_c_pcm",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub dt: f64,
    pub design: PcmDesign,
    pub records: Vec<KnotRecord>,
}

impl Trajectory {
    pub fn n_knots(&self) -> usize {
        self.records.len()
    }

    pub fn horizon(&self) -> f64 {
        (self.records.len().saturating_sub(1)) as f64 * self.dt
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), SimError> {
        let mut wtr = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(writer);
        let err = |e: csv::Error| SimError::Export(e.to_string());
        wtr.write_record(TRAJECTORY_COLUMNS).map_err(err)?;
        for r in &self.records {
            let c = &r.coolant;
            let row = [
                r.t, r.e_d, r.e_pcm, r.t_d, r.soc, r.p_d, r.p_pcm, r.q_hx, r.v1, r.v2, r.q_in,
                r.q_out, r.s_d, r.s_pcm, c.t_c_j1, c.t_c_d, c.t_c_hx, c.t_c_j2, c.t_c_pcm,
            ];
            wtr.write_record(row.iter().map(|v| v.to_string()))
                .map_err(err)?;
        }
        wtr.flush().map_err(|e| SimError::Export(e.to_string()))
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<(), SimError> {
        let file = std::fs::File::create(path.as_ref())
            .map_err(|e| SimError::Export(format!("{}: {e}", path.as_ref().display())))?;
        self.write_csv(std::io::BufWriter::new(file))
    }
}

/// Distance from `value` to `[lb, ub]`.
pub fn violation(value: f64, lb: f64, ub: f64) -> f64 {
    (value - ub).max(lb - value).max(0.0)
}

/// Device and PCM slacks for a pair of stored energies.
pub fn slacks(bounds: &Bounds, design: &PcmDesign, e_d: f64, e_pcm: f64) -> (f64, f64) {
    (
        violation(e_d, bounds.e_d_lb, bounds.e_d_ub),
        violation(
            e_pcm,
            bounds.e_pcm_lb_frac * design.c_pcm,
            bounds.e_pcm_ub_frac * design.c_pcm,
        ),
    )
}

/// Evaluates the plant at a knot. Slacks are filled from the exact bound
/// violations.
pub fn evaluate_knot(
    scenario: &Scenario,
    design: &PcmDesign,
    state: StoredEnergy,
    q_hx: f64,
    valves: ValveCommand,
    disturbance: Disturbance,
) -> Result<KnotRecord, PlantError> {
    let params = &scenario.params;
    let t_d = state.e_d / params.c_d;
    let coolant = solve_coolant(params, design, t_d, valves, q_hx)?;
    if !(disturbance.g >= 0.0) {
        return Err(PlantError::Domain(format!(
            "irradiance must be nonnegative, got {}",
            disturbance.g
        )));
    }
    let boundary = boundary_unchecked(params, disturbance.g, disturbance.t_inf, t_d);
    let (s_d, s_pcm) = slacks(&scenario.bounds, design, state.e_d, state.e_pcm);
    Ok(KnotRecord {
        t: 0.0,
        e_d: state.e_d,
        e_pcm: state.e_pcm,
        t_d,
        soc: state.e_pcm / design.c_pcm,
        p_d: coolant.p_d,
        p_pcm: coolant.p_pcm,
        q_hx,
        v1: valves.v1,
        v2: valves.v2,
        q_in: boundary.q_in,
        q_out: boundary.q_out,
        s_d,
        s_pcm,
        coolant: coolant.state,
    })
}

fn advance(dt: f64, state: StoredEnergy, rec: &KnotRecord) -> StoredEnergy {
    StoredEnergy {
        e_d: state.e_d + dt * (rec.q_in - rec.q_out - rec.p_d),
        e_pcm: state.e_pcm + dt * rec.p_pcm,
    }
}

/// One forward-Euler step from knot `k` to `k + 1`.
pub fn step(
    scenario: &Scenario,
    design: &PcmDesign,
    state: StoredEnergy,
    q_hx: f64,
    valves: ValveCommand,
    disturbance: Disturbance,
) -> Result<StoredEnergy, PlantError> {
    let rec = evaluate_knot(scenario, design, state, q_hx, valves, disturbance)?;
    Ok(advance(scenario.profile.dt, state, &rec))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RolloutMode {
    /// States evolve freely; bound excursions show up as slacks.
    #[default]
    Soft,
    /// The PCM energy is clipped to `[0, C_pcm]` after every step. Breaks
    /// energy conservation; for illustration only.
    PhysicalClamp,
}

pub fn rollout(
    scenario: &Scenario,
    design: &PcmDesign,
    controls: &ControlSequence,
) -> Result<Trajectory, SimError> {
    rollout_with(scenario, design, controls, RolloutMode::Soft)
}

/// Marches from the initial condition over the whole profile. The final
/// record reuses the last interval's controls.
pub fn rollout_with(
    scenario: &Scenario,
    design: &PcmDesign,
    controls: &ControlSequence,
    mode: RolloutMode,
) -> Result<Trajectory, SimError> {
    let n = scenario.n_knots();
    if controls.len() != n - 1 || controls.v1.len() != n - 1 || controls.v2.len() != n - 1 {
        return Err(SimError::Controls(format!(
            "expected {} control intervals, got {}",
            n - 1,
            controls.len()
        )));
    }
    let profile = &scenario.profile;
    let mut state = StoredEnergy {
        e_d: scenario.initial.e_d,
        e_pcm: scenario.initial.e_pcm(design),
    };
    let mut records = Vec::with_capacity(n);
    for k in 0..n {
        let (q_hx, valves) = controls.at(k.min(n - 2));
        let disturbance = Disturbance {
            g: profile.g[k],
            t_inf: profile.t_inf[k],
        };
        let mut rec = evaluate_knot(scenario, design, state, q_hx, valves, disturbance)
            .map_err(|source| SimError::Plant { knot: k, source })?;
        rec.t = profile.time(k);
        if k + 1 < n {
            state = advance(profile.dt, state, &rec);
            if mode == RolloutMode::PhysicalClamp {
                state.e_pcm = state.e_pcm.clamp(0.0, design.c_pcm);
            }
        }
        records.push(rec);
    }
    Ok(Trajectory {
        dt: profile.dt,
        design: *design,
        records,
    })
}
