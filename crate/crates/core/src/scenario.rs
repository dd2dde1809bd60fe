//! Case-study configuration: disturbance profiles, bounds, weights, initial
//! conditions and the control policy, plus their file formats.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::plant::{PcmDesign, PlantError, PlantParams};

pub const SCHEMA_VERSION: u32 = 1;
pub const PROFILE_HEADER: [&str; 3] = ["t_s", "G_wm2", "T_inf_c"];

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("invalid scenario: {0}")]
    Validation(String),
    #[error("profile: {0}")]
    Profile(String),
    #[error("config: {0}")]
    Config(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl ScenarioError {
    /// True when the error stems from an input file that does not exist.
    pub fn is_missing_input(&self) -> bool {
        matches!(
            self,
            ScenarioError::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound
        )
    }

    fn io(path: &Path, source: std::io::Error) -> Self {
        ScenarioError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

impl From<PlantError> for ScenarioError {
    fn from(e: PlantError) -> Self {
        ScenarioError::Validation(e.to_string())
    }
}

/// Irradiance and ambient temperature sampled on a uniform grid and held
/// constant over each interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisturbanceProfile {
    /// Time of the first knot (s).
    pub t0: f64,
    /// Knot spacing (s).
    pub dt: f64,
    /// Irradiance at each knot (W/m²).
    pub g: Vec<f64>,
    /// Ambient temperature at each knot (°C).
    pub t_inf: Vec<f64>,
}

impl DisturbanceProfile {
    pub fn new(t0: f64, dt: f64, g: Vec<f64>, t_inf: Vec<f64>) -> Result<Self, ScenarioError> {
        let p = Self { t0, dt, g, t_inf };
        p.validate()?;
        Ok(p)
    }

    pub fn n_knots(&self) -> usize {
        self.g.len()
    }

    /// Horizon length `(N − 1)·dt`.
    pub fn horizon(&self) -> f64 {
        (self.n_knots() - 1) as f64 * self.dt
    }

    pub fn time(&self, k: usize) -> f64 {
        self.t0 + k as f64 * self.dt
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(ScenarioError::Validation(format!(
                "profile dt must be positive, got {}",
                self.dt
            )));
        }
        if self.g.len() < 2 {
            return Err(ScenarioError::Validation(
                "profile needs at least two knots".into(),
            ));
        }
        if self.g.len() != self.t_inf.len() {
            return Err(ScenarioError::Validation(format!(
                "irradiance has {} samples but ambient temperature has {}",
                self.g.len(),
                self.t_inf.len()
            )));
        }
        if let Some(k) = self.g.iter().position(|g| !(*g >= 0.0 && g.is_finite())) {
            return Err(ScenarioError::Validation(format!(
                "irradiance must be nonnegative, knot {k} has {}",
                self.g[k]
            )));
        }
        if let Some(k) = self.t_inf.iter().position(|t| !t.is_finite()) {
            return Err(ScenarioError::Validation(format!(
                "ambient temperature at knot {k} is not finite"
            )));
        }
        Ok(())
    }
}

/// Parameters of the synthetic peak-hour profile: constant irradiance with
/// a cloud drop inside a window, constant ambient temperature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticProfile {
    pub duration_s: f64,
    pub dt_s: f64,
    pub g_base: f64,
    pub g_drop: f64,
    /// Closed window `[start, end]` (s); an empty window when `start == end`.
    pub drop_window: [f64; 2],
    pub t_inf: f64,
}

impl Default for SyntheticProfile {
    fn default() -> Self {
        Self {
            duration_s: 3600.0,
            dt_s: 60.0,
            g_base: 950.0,
            g_drop: 350.0,
            drop_window: [3000.0, 3600.0],
            t_inf: 33.0,
        }
    }
}

impl SyntheticProfile {
    pub fn build(&self) -> Result<DisturbanceProfile, ScenarioError> {
        synth_profile(
            self.duration_s,
            self.dt_s,
            self.g_base,
            self.g_drop,
            self.drop_window,
            self.t_inf,
        )
    }
}

pub fn synth_profile(
    duration_s: f64,
    dt: f64,
    g_base: f64,
    g_drop: f64,
    drop_window: [f64; 2],
    t_inf_base: f64,
) -> Result<DisturbanceProfile, ScenarioError> {
    if !(dt > 0.0 && duration_s > 0.0) {
        return Err(ScenarioError::Validation(format!(
            "duration and dt must be positive, got {duration_s} s and {dt} s"
        )));
    }
    let intervals = (duration_s / dt).round();
    if (intervals * dt - duration_s).abs() > 1e-9 * duration_s {
        return Err(ScenarioError::Validation(format!(
            "duration {duration_s} s is not a multiple of dt {dt} s"
        )));
    }
    let [start, end] = drop_window;
    if !(0.0 <= start && start <= end && end <= duration_s) {
        return Err(ScenarioError::Validation(format!(
            "drop window [{start}, {end}] must lie inside [0, {duration_s}]"
        )));
    }
    let n = intervals as usize + 1;
    let g = (0..n)
        .map(|k| {
            let t = k as f64 * dt;
            if start < end && start <= t && t <= end {
                g_drop
            } else {
                g_base
            }
        })
        .collect();
    DisturbanceProfile::new(0.0, dt, g, vec![t_inf_base; n])
}

#[derive(Debug, Deserialize)]
struct ProfileRow {
    t_s: f64,
    #[serde(rename = "G_wm2")]
    g_wm2: f64,
    #[serde(rename = "T_inf_c")]
    t_inf_c: f64,
}

/// Reads a `t_s,G_wm2,T_inf_c` profile with uniform spacing.
pub fn read_profile_csv<R: Read>(reader: R) -> Result<DisturbanceProfile, ScenarioError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| ScenarioError::Profile(format!("unreadable header: {e}")))?
        .clone();
    for col in PROFILE_HEADER {
        if !headers.iter().any(|h| h == col) {
            if headers.is_empty() {
                return Err(ScenarioError::Profile(
                    "at least two samples required".into(),
                ));
            }
            return Err(ScenarioError::Profile(format!("missing column {col}")));
        }
    }

    let mut times = Vec::new();
    let mut g = Vec::new();
    let mut t_inf = Vec::new();
    for (i, rec) in rdr.deserialize::<ProfileRow>().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| ScenarioError::Profile(format!("malformed row {row}: {e}")))?;
        if let Some(&prev) = times.last() {
            if !(rec.t_s > prev) {
                return Err(ScenarioError::Profile(format!(
                    "non-monotone time at row {row}"
                )));
            }
        }
        times.push(rec.t_s);
        g.push(rec.g_wm2);
        t_inf.push(rec.t_inf_c);
    }
    if times.len() < 2 {
        return Err(ScenarioError::Profile(
            "at least two samples required".into(),
        ));
    }
    let dt = times[1] - times[0];
    for (i, w) in times.windows(2).enumerate() {
        if ((w[1] - w[0]) - dt).abs() > 1e-9 * dt.abs().max(1.0) {
            return Err(ScenarioError::Profile(format!(
                "non-uniform timestep at row {}",
                i + 2
            )));
        }
    }
    DisturbanceProfile::new(times[0], dt, g, t_inf)
        .map_err(|e| ScenarioError::Profile(e.to_string()))
}

pub fn load_profile_csv(path: impl AsRef<Path>) -> Result<DisturbanceProfile, ScenarioError> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| ScenarioError::io(path, e))?;
    read_profile_csv(file)
}

/// Canonical formatting: shortest round-trip decimal for every value, times
/// recomputed from `t0 + k·dt`.
pub fn write_profile_csv<W: Write>(
    profile: &DisturbanceProfile,
    writer: W,
) -> Result<(), ScenarioError> {
    let mut wtr = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(writer);
    let to_err = |e: csv::Error| ScenarioError::Profile(e.to_string());
    wtr.write_record(PROFILE_HEADER).map_err(to_err)?;
    for k in 0..profile.n_knots() {
        wtr.write_record([
            profile.time(k).to_string(),
            profile.g[k].to_string(),
            profile.t_inf[k].to_string(),
        ])
        .map_err(to_err)?;
    }
    wtr.flush()
        .map_err(|e| ScenarioError::Profile(e.to_string()))
}

pub fn save_profile_csv(
    profile: &DisturbanceProfile,
    path: impl AsRef<Path>,
) -> Result<(), ScenarioError> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| ScenarioError::io(path, e))?;
    write_profile_csv(profile, file)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub e_d_lb: f64,
    pub e_d_ub: f64,
    /// PCM energy bounds as fractions of `C_pcm`.
    pub e_pcm_lb_frac: f64,
    pub e_pcm_ub_frac: f64,
    pub v_lb: f64,
    pub v_ub: f64,
    pub q_hx_lb: f64,
    pub q_hx_ub: f64,
    pub c_pcm_lb: f64,
    pub c_pcm_ub: f64,
    pub t_m_lb: f64,
    pub t_m_ub: f64,
}

impl Bounds {
    pub fn validate(&self) -> Result<(), ScenarioError> {
        let pairs = [
            ("E_d", self.e_d_lb, self.e_d_ub),
            ("E_pcm fraction", self.e_pcm_lb_frac, self.e_pcm_ub_frac),
            ("v", self.v_lb, self.v_ub),
            ("Q_hx", self.q_hx_lb, self.q_hx_ub),
            ("C_pcm", self.c_pcm_lb, self.c_pcm_ub),
            ("T_m", self.t_m_lb, self.t_m_ub),
        ];
        for (name, lb, ub) in pairs {
            if !(lb.is_finite() && ub.is_finite() && lb <= ub) {
                return Err(ScenarioError::Validation(format!(
                    "{name} bounds must satisfy lb <= ub, got [{lb}, {ub}]"
                )));
            }
        }
        if !(0.0..=1.0).contains(&self.e_pcm_lb_frac) || !(0.0..=1.0).contains(&self.e_pcm_ub_frac)
        {
            return Err(ScenarioError::Validation(
                "E_pcm bound fractions must lie in [0, 1]".into(),
            ));
        }
        if self.v_lb < 0.0 || self.v_ub > 1.0 {
            return Err(ScenarioError::Validation(
                "valve bounds must lie in [0, 1]".into(),
            ));
        }
        if self.q_hx_lb < 0.0 {
            return Err(ScenarioError::Validation(
                "Q_hx lower bound must be nonnegative".into(),
            ));
        }
        if self.c_pcm_lb <= 0.0 {
            return Err(ScenarioError::Validation(
                "C_pcm lower bound must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Weights {
    pub w_d: f64,
    pub w_s: f64,
    /// Compromise exponent applied to both aggregates.
    pub n: f64,
    pub w_ie: f64,
    pub w_ce: f64,
    pub w_cv_d: f64,
    pub w_cv_p: f64,
    pub w_m: f64,
    pub w_nom: f64,
}

impl Weights {
    /// Internal weights at 1 except `w_nom = 0`, `n = 1`.
    pub fn with_outer(w_d: f64, w_s: f64) -> Self {
        Self {
            w_d,
            w_s,
            n: 1.0,
            w_ie: 1.0,
            w_ce: 1.0,
            w_cv_d: 1.0,
            w_cv_p: 1.0,
            w_m: 1.0,
            w_nom: 0.0,
        }
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let all = [
            self.w_d,
            self.w_s,
            self.w_ie,
            self.w_ce,
            self.w_cv_d,
            self.w_cv_p,
            self.w_m,
            self.w_nom,
        ];
        if all.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
            return Err(ScenarioError::Validation(
                "weights must be finite and nonnegative".into(),
            ));
        }
        if !(self.n >= 1.0 && self.n.is_finite()) {
            return Err(ScenarioError::Validation(format!(
                "compromise exponent n must be >= 1, got {}",
                self.n
            )));
        }
        Ok(())
    }
}

/// Nominal PCM power and duration entering the static `J_nom` term.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct NominalDuty {
    pub p_pcm_nom: f64,
    pub t_nom: f64,
}

/// Initial device energy and PCM state of charge. The PCM energy follows as
/// `soc · C_pcm` because the capacity is itself a design variable.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitialCondition {
    pub e_d: f64,
    pub soc: f64,
}

impl InitialCondition {
    pub fn e_pcm(&self, design: &PcmDesign) -> f64 {
        self.soc * design.c_pcm
    }
}

/// A control channel is either held at a constant or left to the optimizer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Channel {
    Fixed(f64),
    Optimized,
}

impl Channel {
    pub fn fixed_value(&self) -> Option<f64> {
        match self {
            Channel::Fixed(v) => Some(*v),
            Channel::Optimized => None,
        }
    }

    pub fn is_optimized(&self) -> bool {
        matches!(self, Channel::Optimized)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum ChannelRepr {
    Value(f64),
    Word(String),
}

impl Serialize for Channel {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Channel::Fixed(v) => ChannelRepr::Value(*v),
            Channel::Optimized => ChannelRepr::Word("optimize".into()),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Channel {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        match ChannelRepr::deserialize(d)? {
            ChannelRepr::Value(v) => Ok(Channel::Fixed(v)),
            ChannelRepr::Word(w) if w == "optimize" => Ok(Channel::Optimized),
            ChannelRepr::Word(w) => Err(serde::de::Error::custom(format!(
                "control channel must be a number or \"optimize\", got \"{w}\""
            ))),
        }
    }
}

/// Which control sequences are decision variables. Covers fixed valves with
/// optimized heat-exchanger duty, fully optimized controls, and all-fixed
/// (pure simulation).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlPolicy {
    pub q_hx: Channel,
    pub v1: Channel,
    pub v2: Channel,
}

impl ControlPolicy {
    pub fn fixed_valves(v1: f64, v2: f64) -> Self {
        Self {
            q_hx: Channel::Optimized,
            v1: Channel::Fixed(v1),
            v2: Channel::Fixed(v2),
        }
    }

    pub fn fully_optimized() -> Self {
        Self {
            q_hx: Channel::Optimized,
            v1: Channel::Optimized,
            v2: Channel::Optimized,
        }
    }

    pub fn all_fixed(q_hx: f64, v1: f64, v2: f64) -> Self {
        Self {
            q_hx: Channel::Fixed(q_hx),
            v1: Channel::Fixed(v1),
            v2: Channel::Fixed(v2),
        }
    }

    pub fn is_all_fixed(&self) -> bool {
        !(self.q_hx.is_optimized() || self.v1.is_optimized() || self.v2.is_optimized())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub params: PlantParams,
    pub profile: DisturbanceProfile,
    pub bounds: Bounds,
    pub weights: Weights,
    pub nominal: NominalDuty,
    pub initial: InitialCondition,
    pub policy: ControlPolicy,
}

impl Scenario {
    pub fn validate(&self) -> Result<(), ScenarioError> {
        self.params.validate()?;
        self.profile.validate()?;
        self.bounds.validate()?;
        self.weights.validate()?;
        if !(self.initial.e_d > 0.0 && self.initial.e_d.is_finite()) {
            return Err(ScenarioError::Validation(format!(
                "initial device energy must be positive, got {}",
                self.initial.e_d
            )));
        }
        if !(0.0..=1.0).contains(&self.initial.soc) {
            return Err(ScenarioError::Validation(format!(
                "initial state of charge must lie in [0, 1], got {}",
                self.initial.soc
            )));
        }
        let b = &self.bounds;
        for (name, ch, lb, ub) in [
            ("q_hx", self.policy.q_hx, b.q_hx_lb, b.q_hx_ub),
            ("v1", self.policy.v1, b.v_lb, b.v_ub),
            ("v2", self.policy.v2, b.v_lb, b.v_ub),
        ] {
            if let Some(v) = ch.fixed_value() {
                if !(lb <= v && v <= ub) {
                    return Err(ScenarioError::Validation(format!(
                        "fixed {name} = {v} lies outside its bounds [{lb}, {ub}]"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn n_knots(&self) -> usize {
        self.profile.n_knots()
    }

    pub fn with_weights(mut self, w_d: f64, w_s: f64) -> Self {
        self.weights.w_d = w_d;
        self.weights.w_s = w_s;
        self
    }
}

pub fn case_study_params() -> PlantParams {
    PlantParams {
        c_d: 4580.0,
        ha_dc: 21.42,
        ha_cpcm: 21.42,
        m_dot_d: 1.794,
        c_p: 1370.0,
        alpha: 0.7,
        a_s: 0.8,
        h_inf: 13.39,
        eta_pv: 0.2,
    }
}

pub fn case_study_bounds() -> Bounds {
    Bounds {
        e_d_lb: 45_800.0,
        e_d_ub: 229_000.0,
        e_pcm_lb_frac: 0.0,
        e_pcm_ub_frac: 1.0,
        v_lb: 0.0,
        v_ub: 1.0,
        q_hx_lb: 0.0,
        q_hx_ub: 100.0,
        c_pcm_lb: 5e5,
        c_pcm_ub: 6e6,
        t_m_lb: 20.0,
        t_m_ub: 50.0,
    }
}

/// The peak-hour PV case study on the synthetic profile, unit outer weights,
/// passive valve configuration (PCM only, heat exchanger bypassed).
pub fn default_case_study() -> Scenario {
    let params = case_study_params();
    Scenario {
        profile: SyntheticProfile::default()
            .build()
            .expect("default synthetic profile is valid"),
        bounds: case_study_bounds(),
        weights: Weights::with_outer(1.0, 1.0),
        nominal: NominalDuty::default(),
        initial: InitialCondition {
            e_d: params.c_d * 35.0,
            soc: 0.5,
        },
        policy: ControlPolicy::all_fixed(0.0, 0.0, 1.0),
        params,
    }
}

/// Passive cooling: `v1 = 0`, `v2 = 1`, no heat-exchanger duty.
pub fn case_study_1(w_d: f64, w_s: f64) -> Scenario {
    Scenario {
        policy: ControlPolicy::all_fixed(0.0, 0.0, 1.0),
        ..default_case_study()
    }
    .with_weights(w_d, w_s)
}

/// Active cooling: `v1 = 1`, `v2 = 0.5`, optimized heat-exchanger duty.
pub fn case_study_2(w_d: f64, w_s: f64) -> Scenario {
    Scenario {
        policy: ControlPolicy::fixed_valves(1.0, 0.5),
        ..default_case_study()
    }
    .with_weights(w_d, w_s)
}

/// Where a config file takes its disturbance profile from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum ProfileSource {
    Synthetic(SyntheticProfile),
    /// Path relative to the config file.
    Csv {
        path: PathBuf,
    },
    Inline(DisturbanceProfile),
}

/// On-disk scenario configuration (TOML).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub schema_version: u32,
    pub params: PlantParams,
    pub profile: ProfileSource,
    pub bounds: Bounds,
    pub weights: Weights,
    #[serde(default)]
    pub nominal: NominalDuty,
    pub initial: InitialCondition,
    pub policy: ControlPolicy,
    /// Required for pure simulation; ignored by the optimizer.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub design: Option<PcmDesign>,
}

/// A resolved config: scenario plus optional fixed design.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub scenario: Scenario,
    pub design: Option<PcmDesign>,
}

impl ScenarioConfig {
    pub fn from_scenario(scenario: &Scenario, design: Option<PcmDesign>) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            params: scenario.params,
            profile: ProfileSource::Inline(scenario.profile.clone()),
            bounds: scenario.bounds,
            weights: scenario.weights,
            nominal: scenario.nominal,
            initial: scenario.initial,
            policy: scenario.policy,
            design,
        }
    }

    pub fn parse(text: &str) -> Result<Self, ScenarioError> {
        let cfg: Self = toml::from_str(text).map_err(|e| ScenarioError::Config(e.to_string()))?;
        if cfg.schema_version != SCHEMA_VERSION {
            return Err(ScenarioError::Config(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                cfg.schema_version
            )));
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario config is always representable as TOML")
    }

    /// Resolves the profile (relative CSV paths against `base_dir`) and
    /// validates the result. `profile_override` replaces the configured
    /// profile with a CSV file.
    pub fn resolve(
        &self,
        base_dir: &Path,
        profile_override: Option<&Path>,
    ) -> Result<RunConfig, ScenarioError> {
        let profile = match (profile_override, &self.profile) {
            (Some(p), _) => load_profile_csv(p)?,
            (None, ProfileSource::Synthetic(s)) => s.build()?,
            (None, ProfileSource::Csv { path }) => load_profile_csv(base_dir.join(path))?,
            (None, ProfileSource::Inline(p)) => p.clone(),
        };
        let scenario = Scenario {
            params: self.params,
            profile,
            bounds: self.bounds,
            weights: self.weights,
            nominal: self.nominal,
            initial: self.initial,
            policy: self.policy,
        };
        scenario.validate()?;
        if let Some(d) = &self.design {
            d.validate()?;
        }
        Ok(RunConfig {
            scenario,
            design: self.design,
        })
    }
}

pub fn load_config(
    path: impl AsRef<Path>,
    profile_override: Option<&Path>,
) -> Result<RunConfig, ScenarioError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| ScenarioError::io(path, e))?;
    let cfg = ScenarioConfig::parse(&text)?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    cfg.resolve(base, profile_override)
}
