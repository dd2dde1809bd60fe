//! Thermal network of the hybrid PCM / heat-exchanger cooling loop.
//!
//! Two lumped energy stores (the hot device and the PCM) exchange heat through
//! a coolant loop that carries no thermal mass. Given the device temperature,
//! the melt temperature, the valve splits and the heat-exchanger duty, the five
//! coolant temperatures follow from a linear 5×5 balance, and from those the
//! device cooling power `P_d` and the PCM charging power `P_pcm`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{condition_estimate, Lu, Matrix};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlantError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("infeasible: heat-exchanger branch carries no flow but Q_hx = {q_hx} W is commanded")]
    NoHxFlow { q_hx: f64 },
    #[error("singular coolant system (pivot column {column}, 1-norm condition {condition:.3e})")]
    Singular { column: usize, condition: f64 },
}

/// Physical constants of the loop and of the PV boundary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlantParams {
    /// Device thermal capacitance (J/°C).
    pub c_d: f64,
    /// Device to coolant conductance (W/°C).
    pub ha_dc: f64,
    /// Coolant to PCM conductance (W/°C).
    pub ha_cpcm: f64,
    /// Coolant mass flow through the device branch (kg/s).
    pub m_dot_d: f64,
    /// Coolant specific heat (J/kg/°C).
    pub c_p: f64,
    /// Surface absorptivity.
    pub alpha: f64,
    /// Surface area (m²).
    pub a_s: f64,
    /// Ambient convection coefficient (W/m²/°C).
    pub h_inf: f64,
    /// Electrical conversion efficiency applied to the absorbed heat.
    pub eta_pv: f64,
}

impl PlantParams {
    pub fn validate(&self) -> Result<(), PlantError> {
        let positive = [
            ("c_d", self.c_d),
            ("ha_dc", self.ha_dc),
            ("ha_cpcm", self.ha_cpcm),
            ("m_dot_d", self.m_dot_d),
            ("c_p", self.c_p),
            ("a_s", self.a_s),
            ("h_inf", self.h_inf),
        ];
        for (name, value) in positive {
            if !(value > 0.0 && value.is_finite()) {
                return Err(PlantError::Domain(format!(
                    "{name} must be strictly positive, got {value}"
                )));
            }
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(PlantError::Domain(format!(
                "alpha must lie in (0, 1], got {}",
                self.alpha
            )));
        }
        if !(self.eta_pv >= 0.0 && self.eta_pv < 1.0) {
            return Err(PlantError::Domain(format!(
                "eta_pv must lie in [0, 1), got {}",
                self.eta_pv
            )));
        }
        Ok(())
    }
}

/// The static PCM design: latent capacity and melt temperature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PcmDesign {
    /// Latent storage capacity (J).
    pub c_pcm: f64,
    /// Melting temperature (°C).
    pub t_m: f64,
}

impl PcmDesign {
    pub fn new(c_pcm: f64, t_m: f64) -> Result<Self, PlantError> {
        let design = Self { c_pcm, t_m };
        design.validate()?;
        Ok(design)
    }

    /// Capacity of `mass` kg of PCM with latent heat `latent_heat` J/kg.
    pub fn from_mass(mass: f64, latent_heat: f64, t_m: f64) -> Result<Self, PlantError> {
        if !(mass > 0.0 && latent_heat > 0.0) {
            return Err(PlantError::Domain(format!(
                "PCM mass and latent heat must be positive, got {mass} kg and {latent_heat} J/kg"
            )));
        }
        Self::new(mass * latent_heat, t_m)
    }

    pub fn validate(&self) -> Result<(), PlantError> {
        if !(self.c_pcm > 0.0 && self.c_pcm.is_finite()) {
            return Err(PlantError::Domain(format!(
                "C_pcm must be strictly positive, got {}",
                self.c_pcm
            )));
        }
        if !self.t_m.is_finite() {
            return Err(PlantError::Domain("T_m must be finite".into()));
        }
        Ok(())
    }
}

/// Valve split commands. `v1 = 1` sends everything leaving the heat exchanger
/// toward junction 2; `v2 = 1` sends everything leaving the device toward
/// junction 2, bypassing the heat exchanger.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValveCommand {
    pub v1: f64,
    pub v2: f64,
}

impl ValveCommand {
    pub fn new(v1: f64, v2: f64) -> Result<Self, PlantError> {
        let v = Self { v1, v2 };
        v.validate()?;
        Ok(v)
    }

    pub fn validate(&self) -> Result<(), PlantError> {
        for (name, value) in [("v1", self.v1), ("v2", self.v2)] {
            if !(0.0..=1.0).contains(&value) {
                return Err(PlantError::Domain(format!(
                    "{name} must lie in [0, 1], got {value}"
                )));
            }
        }
        Ok(())
    }
}

/// Branch mass flows (kg/s).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowSplit {
    pub m_hx: f64,
    pub m_pcm: f64,
    pub m_1: f64,
    pub m_2: f64,
    pub m_3: f64,
}

/// Coolant temperatures (°C) at junction 1, the device, the heat exchanger
/// outlet, junction 2 and the PCM.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoolantState {
    pub t_c_j1: f64,
    pub t_c_d: f64,
    pub t_c_hx: f64,
    pub t_c_j2: f64,
    pub t_c_pcm: f64,
}

impl CoolantState {
    pub fn as_array(&self) -> [f64; 5] {
        [
            self.t_c_j1,
            self.t_c_d,
            self.t_c_hx,
            self.t_c_j2,
            self.t_c_pcm,
        ]
    }

    fn from_array(x: [f64; 5]) -> Self {
        Self {
            t_c_j1: x[J1],
            t_c_d: x[CD],
            t_c_hx: x[HX],
            t_c_j2: x[J2],
            t_c_pcm: x[CP],
        }
    }
}

/// Result of a coolant solve: temperatures plus the two cooling powers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoolantSolution {
    pub state: CoolantState,
    /// Device to coolant power (W).
    pub p_d: f64,
    /// Coolant to PCM power (W).
    pub p_pcm: f64,
    /// Heat rejected by the heat exchanger (W).
    pub q_hx: f64,
}

/// Partial derivatives of `P_d` and `P_pcm` with respect to
/// `[T_d, T_m, Q_hx, v1, v2]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerSensitivity {
    pub p_d: [f64; 5],
    pub p_pcm: [f64; 5],
}

/// Index of each input in [`PowerSensitivity`] rows.
pub mod wrt {
    pub const T_D: usize = 0;
    pub const T_M: usize = 1;
    pub const Q_HX: usize = 2;
    pub const V1: usize = 3;
    pub const V2: usize = 4;
}

/// The five critical heat-flow terms at one instant (W).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeatFlows {
    pub p_d: f64,
    pub p_pcm: f64,
    pub q_hx: f64,
    pub q_in: f64,
    pub q_out: f64,
}

/// Heat absorbed by and leaving the PV surface (W).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryHeat {
    pub q_in: f64,
    pub q_out: f64,
}

const J1: usize = 0;
const CD: usize = 1;
const HX: usize = 2;
const J2: usize = 3;
const CP: usize = 4;

/// Steady mass conservation through the two three-way valves.
pub fn flow_split(v: ValveCommand, m_dot_d: f64) -> Result<FlowSplit, PlantError> {
    v.validate()?;
    if !(m_dot_d > 0.0 && m_dot_d.is_finite()) {
        return Err(PlantError::Domain(format!(
            "m_dot_d must be strictly positive, got {m_dot_d}"
        )));
    }
    Ok(split_unchecked(v, m_dot_d))
}

fn split_unchecked(v: ValveCommand, m_dot_d: f64) -> FlowSplit {
    // Valve outputs are snapped to multiples of ulp(m_dot_d); every partial
    // sum of such values is representable, so the junction balances close
    // exactly in floating point and not only algebraically.
    let q = m_dot_d.next_up() - m_dot_d;
    let snap = |x: f64| (x / q).round() * q;
    let m_3 = snap(v.v2 * m_dot_d);
    let m_hx = m_dot_d - m_3;
    let m_2 = snap(v.v1 * m_hx);
    let m_1 = m_hx - m_2;
    let m_pcm = m_dot_d - m_1;
    FlowSplit {
        m_hx,
        m_pcm,
        m_1,
        m_2,
        m_3,
    }
}

/// Derivatives of each branch flow with respect to `v1` and `v2`.
fn split_derivatives(v: ValveCommand, m_dot_d: f64) -> [FlowSplit; 2] {
    let (v1, v2) = (v.v1, v.v2);
    [
        FlowSplit {
            m_hx: 0.0,
            m_pcm: (1.0 - v2) * m_dot_d,
            m_1: -(1.0 - v2) * m_dot_d,
            m_2: (1.0 - v2) * m_dot_d,
            m_3: 0.0,
        },
        FlowSplit {
            m_hx: -m_dot_d,
            m_pcm: (1.0 - v1) * m_dot_d,
            m_1: -(1.0 - v1) * m_dot_d,
            m_2: -v1 * m_dot_d,
            m_3: m_dot_d,
        },
    ]
}

#[derive(Debug, Clone, Copy)]
struct Degeneracy {
    no_pcm_flow: bool,
    no_hx_flow: bool,
}

/// Flow-dependent part of the coolant matrix. Rows are the balances at J1,
/// the device, the heat exchanger, J2 and the PCM, in that order.
fn flow_matrix(c_p: f64, m_dot_d: f64, f: &FlowSplit) -> Matrix<5> {
    let mut a = [[0.0; 5]; 5];
    a[0][HX] = c_p * f.m_1;
    a[0][CP] = c_p * f.m_pcm;
    a[0][J1] = -c_p * m_dot_d;

    a[1][J1] = c_p * m_dot_d;
    a[1][CD] = -c_p * m_dot_d;

    a[2][CD] = c_p * f.m_hx;
    a[2][HX] = -c_p * f.m_hx;

    a[3][HX] = c_p * f.m_2;
    a[3][CD] = c_p * f.m_3;
    a[3][J2] = -c_p * f.m_pcm;

    a[4][J2] = c_p * f.m_pcm;
    a[4][CP] = -c_p * f.m_pcm;
    a
}

struct System {
    a: Matrix<5>,
    b: [f64; 5],
    degeneracy: Degeneracy,
}

fn assemble(
    params: &PlantParams,
    t_m: f64,
    t_d: f64,
    flows: &FlowSplit,
    q_hx: f64,
) -> Result<System, PlantError> {
    let degeneracy = Degeneracy {
        no_pcm_flow: flows.m_pcm == 0.0,
        no_hx_flow: flows.m_hx == 0.0,
    };
    if degeneracy.no_hx_flow && q_hx != 0.0 {
        return Err(PlantError::NoHxFlow { q_hx });
    }

    let mut a = flow_matrix(params.c_p, params.m_dot_d, flows);
    a[1][CD] -= params.ha_dc;
    a[4][CP] -= params.ha_cpcm;
    let mut b = [0.0, -params.ha_dc * t_d, q_hx, 0.0, -params.ha_cpcm * t_m];

    if degeneracy.no_hx_flow {
        // Pass-through: the heat-exchanger outlet equals the device outlet.
        a[2] = [0.0, -1.0, 1.0, 0.0, 0.0];
        b[2] = 0.0;
    }
    if degeneracy.no_pcm_flow {
        // Junction 2 is stagnant; pin it to the PCM-side coolant, which the
        // PCM balance in turn pins to T_m.
        a[3] = [0.0, 0.0, 0.0, 1.0, -1.0];
        b[3] = 0.0;
    }
    Ok(System { a, b, degeneracy })
}

/// Row equilibration so the pivot test is independent of branch-flow scale.
fn equilibrate(a: &mut Matrix<5>, b: &mut [f64; 5]) -> [f64; 5] {
    let mut d = [1.0; 5];
    for i in 0..5 {
        let m = a[i].iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        if m > 0.0 {
            d[i] = 1.0 / m;
            for v in a[i].iter_mut() {
                *v *= d[i];
            }
            b[i] *= d[i];
        }
    }
    d
}

fn factor(a: &Matrix<5>) -> Result<Lu<5>, PlantError> {
    Lu::factor(a).map_err(|s| PlantError::Singular {
        column: s.column,
        condition: condition_estimate(a),
    })
}

fn check_inputs(
    params: &PlantParams,
    design: &PcmDesign,
    t_d: f64,
    v: ValveCommand,
    q_hx: f64,
) -> Result<(), PlantError> {
    params.validate()?;
    design.validate()?;
    v.validate()?;
    if !t_d.is_finite() {
        return Err(PlantError::Domain(format!("T_d must be finite, got {t_d}")));
    }
    if !(q_hx >= 0.0 && q_hx.is_finite()) {
        return Err(PlantError::Domain(format!(
            "Q_hx must be nonnegative, got {q_hx}"
        )));
    }
    Ok(())
}

/// Solves the zero-capacitance coolant balances for the five coolant
/// temperatures and returns them with `P_d` and `P_pcm`.
///
/// When the PCM branch carries no flow its coolant sits at `T_m` (so
/// `P_pcm = 0`); when the heat-exchanger branch carries no flow its outlet
/// passes the device outlet temperature through and `Q_hx` must be zero.
pub fn solve_coolant(
    params: &PlantParams,
    design: &PcmDesign,
    t_d: f64,
    v: ValveCommand,
    q_hx: f64,
) -> Result<CoolantSolution, PlantError> {
    check_inputs(params, design, t_d, v, q_hx)?;
    let flows = split_unchecked(v, params.m_dot_d);
    let System {
        mut a,
        mut b,
        degeneracy,
    } = assemble(params, design.t_m, t_d, &flows, q_hx)?;
    equilibrate(&mut a, &mut b);
    let lu = factor(&a)?;
    let x = pin_degenerate(lu.solve(&b), degeneracy, design.t_m);
    Ok(solution_from(params, design, t_d, q_hx, x))
}

/// The stagnant branches are exactly determined; overwrite the round-off.
fn pin_degenerate(mut x: [f64; 5], degeneracy: Degeneracy, t_m: f64) -> [f64; 5] {
    if degeneracy.no_pcm_flow {
        x[J2] = t_m;
        x[CP] = t_m;
    }
    if degeneracy.no_hx_flow {
        x[HX] = x[CD];
    }
    x
}

fn solution_from(
    params: &PlantParams,
    design: &PcmDesign,
    t_d: f64,
    q_hx: f64,
    x: [f64; 5],
) -> CoolantSolution {
    CoolantSolution {
        state: CoolantState::from_array(x),
        p_d: params.ha_dc * (t_d - x[CD]),
        p_pcm: params.ha_cpcm * (x[CP] - design.t_m),
        q_hx,
    }
}

/// [`solve_coolant`] plus analytic derivatives of `P_d` and `P_pcm`.
///
/// With `A(v) x = b(T_d, T_m, Q_hx)`, each output `y = cᵀx + d(θ)` has
/// `dy/dθ = ∂d/∂θ + λᵀ(∂b/∂θ − ∂A/∂θ x)` where `Aᵀλ = c`, so two transposed
/// solves on the existing factorization cover all five inputs.
pub fn solve_coolant_with_sensitivity(
    params: &PlantParams,
    design: &PcmDesign,
    t_d: f64,
    v: ValveCommand,
    q_hx: f64,
) -> Result<(CoolantSolution, PowerSensitivity), PlantError> {
    check_inputs(params, design, t_d, v, q_hx)?;
    let flows = split_unchecked(v, params.m_dot_d);
    let System {
        mut a,
        mut b,
        degeneracy,
    } = assemble(params, design.t_m, t_d, &flows, q_hx)?;
    let d = equilibrate(&mut a, &mut b);
    let lu = factor(&a)?;
    let x = pin_degenerate(lu.solve(&b), degeneracy, design.t_m);
    let solution = solution_from(params, design, t_d, q_hx, x);

    // Output weights on x: P_d = ha_dc (T_d − x_cd), P_pcm = ha_cpcm (x_cp − T_m).
    let mut c_d = [0.0; 5];
    c_d[CD] = -params.ha_dc;
    let mut c_p = [0.0; 5];
    c_p[CP] = params.ha_cpcm;
    let lambda_d = lu.solve_transpose(&c_d);
    let lambda_p = lu.solve_transpose(&c_p);

    // Unscaled right-hand-side perturbations db/dθ − dA/dθ · x for each θ.
    let mut rhs = [[0.0; 5]; 5];
    rhs[wrt::T_D][1] = -params.ha_dc;
    rhs[wrt::T_M][4] = -params.ha_cpcm;
    if !degeneracy.no_hx_flow {
        rhs[wrt::Q_HX][2] = 1.0;
    }
    let dflows = split_derivatives(v, params.m_dot_d);
    for (k, df) in dflows.iter().enumerate() {
        let mut da = flow_matrix(params.c_p, 0.0, df);
        if degeneracy.no_hx_flow {
            da[2] = [0.0; 5];
        }
        if degeneracy.no_pcm_flow {
            da[3] = [0.0; 5];
        }
        let dax = crate::linalg::mat_vec(&da, &x);
        for i in 0..5 {
            rhs[wrt::V1 + k][i] = -dax[i];
        }
    }

    let mut sens = PowerSensitivity {
        p_d: [0.0; 5],
        p_pcm: [0.0; 5],
    };
    for theta in 0..5 {
        let r: Vec<f64> = (0..5).map(|i| d[i] * rhs[theta][i]).collect();
        sens.p_d[theta] = lambda_d.iter().zip(&r).map(|(l, r)| l * r).sum();
        sens.p_pcm[theta] = lambda_p.iter().zip(&r).map(|(l, r)| l * r).sum();
    }
    sens.p_d[wrt::T_D] += params.ha_dc;
    sens.p_pcm[wrt::T_M] -= params.ha_cpcm;
    Ok((solution, sens))
}

/// Residuals of the five coolant balances (W), with `P_d` and `P_pcm`
/// expressed through the coolant temperatures.
pub fn coolant_residuals(
    params: &PlantParams,
    design: &PcmDesign,
    t_d: f64,
    flows: &FlowSplit,
    q_hx: f64,
    s: &CoolantState,
) -> [f64; 5] {
    let cp = params.c_p;
    let p_d = params.ha_dc * (t_d - s.t_c_d);
    let p_pcm = params.ha_cpcm * (s.t_c_pcm - design.t_m);
    [
        flows.m_1 * cp * s.t_c_hx + flows.m_pcm * cp * s.t_c_pcm - params.m_dot_d * cp * s.t_c_j1,
        p_d + params.m_dot_d * cp * (s.t_c_j1 - s.t_c_d),
        flows.m_hx * cp * (s.t_c_d - s.t_c_hx) - q_hx,
        flows.m_2 * cp * s.t_c_hx + flows.m_3 * cp * s.t_c_d - flows.m_pcm * cp * s.t_c_j2,
        flows.m_pcm * cp * (s.t_c_j2 - s.t_c_pcm) - p_pcm,
    ]
}

/// Absorbed irradiance and the non-coolant losses of a PV surface.
pub fn pv_boundary(
    params: &PlantParams,
    irradiance: f64,
    t_inf: f64,
    t_d: f64,
) -> Result<BoundaryHeat, PlantError> {
    params.validate()?;
    if !(irradiance >= 0.0 && irradiance.is_finite()) {
        return Err(PlantError::Domain(format!(
            "irradiance must be nonnegative, got {irradiance}"
        )));
    }
    Ok(boundary_unchecked(params, irradiance, t_inf, t_d))
}

pub(crate) fn boundary_unchecked(
    params: &PlantParams,
    irradiance: f64,
    t_inf: f64,
    t_d: f64,
) -> BoundaryHeat {
    let q_in = params.alpha * params.a_s * irradiance;
    let q_out = params.h_inf * params.a_s * (t_d - t_inf) + params.eta_pv * q_in;
    BoundaryHeat { q_in, q_out }
}

pub fn device_temperature(params: &PlantParams, e_d: f64) -> f64 {
    e_d / params.c_d
}

pub fn device_energy(params: &PlantParams, t_d: f64) -> f64 {
    params.c_d * t_d
}

pub fn state_of_charge(design: &PcmDesign, e_pcm: f64) -> f64 {
    e_pcm / design.c_pcm
}

pub fn pcm_energy(design: &PcmDesign, soc: f64) -> f64 {
    design.c_pcm * soc
}

/// Device temperature and PCM state of charge from the two stored energies.
pub fn state_conversions(
    params: &PlantParams,
    design: &PcmDesign,
    e_d: f64,
    e_pcm: f64,
) -> (f64, f64) {
    (
        device_temperature(params, e_d),
        state_of_charge(design, e_pcm),
    )
}
