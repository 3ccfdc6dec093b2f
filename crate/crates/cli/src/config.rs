//! Experiment configuration: a JSON file with a `schema_version` field.
//!
//! State numbers in the file are 1-based (`"state": 1` is the SOC); the
//! library API is 0-based. Loading fills every defaulted field, so a saved
//! config always re-loads to the same value.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use monoride::bangride::BangRidePolicy;
use monoride::constraints::{
    plating_constraint, temperature_limit, upper_bound_input, upper_bound_state, voltage_limit,
    Constraint, ConstraintSet, PlatingTable,
};
use monoride::dynamics::{
    build_ecm, build_fd_spm, build_pade_spm, build_thermal_coupled_ecm, thermal_temperature_index,
    ControlSystem, EcmParams, ElectrodeSign, FdSpmParams, LinearOutput, OcvCurve, PadeSpmParams,
    RcPair, ThermalParams, FARADAY,
};
use monoride::optimality::OracleProblem;
use monoride::sampling::{SampleBox, SamplingOptions};
use monoride::simulate::RunningCost;

pub const SCHEMA_VERSION: u32 = 1;

/// Default number of integration steps over the horizon when `dt` is omitted.
const DEFAULT_STEPS: f64 = 2000.0;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{file}: at `{field}` (line {line}, column {column}): {message}")]
    Parse {
        file: String,
        field: String,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("unsupported schema_version {0} (this build reads {SCHEMA_VERSION})")]
    SchemaVersion(u32),
    #[error("{0}")]
    CrossReference(String),
    #[error("invalid model parameter: {0}")]
    Invalid(#[from] monoride::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub model: ModelConfig,
    pub constraints: Vec<ConstraintConfig>,
    pub cost: CostConfig,
    pub horizon: Horizon,
    #[serde(default)]
    pub policy: PolicyConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle: Option<OracleConfig>,
    #[serde(default)]
    pub check: CheckConfig,
    /// Initial state; zeros when omitted.
    #[serde(default)]
    pub initial_state: Option<Vec<f64>>,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelConfig {
    Ecm {
        #[serde(default)]
        cell: CellConfig,
    },
    ThermalEcm {
        #[serde(default)]
        cell: CellConfig,
        #[serde(default)]
        thermal: ThermalConfig,
    },
    PadeSpm {
        a: [f64; 2],
        b: [f64; 3],
        c: [f64; 3],
        /// A·s; only needed for SOC-rate costs and C-rate input bounds.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        capacity: Option<f64>,
    },
    FdSpm {
        diffusivity: f64,
        particle_radius: f64,
        n_interior: usize,
        surface_area: f64,
        collector_area: f64,
        thickness: f64,
        #[serde(default = "default_electrode")]
        electrode: Electrode,
        #[serde(default = "default_faraday")]
        faraday: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        capacity: Option<f64>,
    },
}

fn default_electrode() -> Electrode {
    Electrode::Cathode
}

fn default_faraday() -> f64 {
    FARADAY
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Electrode {
    Cathode,
    Anode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CellConfig {
    /// A·s
    pub capacity: f64,
    /// ohm
    pub series_resistance: f64,
    pub rc_pairs: Vec<RcPairConfig>,
    pub ocv: OcvConfig,
}

impl Default for CellConfig {
    fn default() -> Self {
        let p = EcmParams::default();
        Self {
            capacity: p.capacity,
            series_resistance: p.series_resistance,
            rc_pairs: p
                .rc_pairs
                .iter()
                .map(|rc| RcPairConfig {
                    resistance: rc.resistance,
                    capacitance: rc.capacitance,
                })
                .collect(),
            ocv: OcvConfig::default(),
        }
    }
}

impl CellConfig {
    pub fn params(&self) -> EcmParams {
        EcmParams {
            capacity: self.capacity,
            series_resistance: self.series_resistance,
            rc_pairs: self
                .rc_pairs
                .iter()
                .map(|rc| RcPair {
                    resistance: rc.resistance,
                    capacitance: rc.capacitance,
                })
                .collect(),
            ocv: match &self.ocv {
                OcvConfig::Affine { intercept, slope } => OcvCurve::Affine {
                    intercept: *intercept,
                    slope: *slope,
                },
                OcvConfig::Table { soc, volts } => OcvCurve::Table {
                    soc: soc.clone(),
                    volts: volts.clone(),
                },
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RcPairConfig {
    pub resistance: f64,
    pub capacitance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum OcvConfig {
    Affine { intercept: f64, slope: f64 },
    Table { soc: Vec<f64>, volts: Vec<f64> },
}

impl Default for OcvConfig {
    fn default() -> Self {
        match OcvCurve::default() {
            OcvCurve::Affine { intercept, slope } => OcvConfig::Affine { intercept, slope },
            OcvCurve::Table { soc, volts } => OcvConfig::Table { soc, volts },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThermalConfig {
    /// kg
    pub mass: f64,
    /// J/(kg K)
    pub heat_capacity: f64,
    /// K/W
    pub thermal_resistance: f64,
}

impl Default for ThermalConfig {
    fn default() -> Self {
        let t = ThermalParams::default();
        Self {
            mass: t.mass,
            heat_capacity: t.heat_capacity,
            thermal_resistance: t.thermal_resistance,
        }
    }
}

impl ThermalConfig {
    pub fn params(&self) -> ThermalParams {
        ThermalParams {
            mass: self.mass,
            heat_capacity: self.heat_capacity,
            thermal_resistance: self.thermal_resistance,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintConfig {
    #[serde(flatten)]
    pub spec: ConstraintSpec,
    /// Overrides the generated constraint name.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol_active: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol_engaged: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ConstraintSpec {
    /// `x_state <= limit`, `state` 1-based.
    StateUpper { state: usize, limit: f64 },
    InputUpper {
        limit: f64,
        #[serde(default)]
        unit: CurrentUnit,
    },
    /// Terminal voltage, V.
    Voltage { limit: f64 },
    /// Temperature rise of the thermal model, K.
    Temperature { limit: f64 },
    /// Plating boundary, either from a CSV file (relative to the config) or inline points.
    Plating {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        table_csv: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        concentration: Option<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        max_current: Option<Vec<f64>>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurrentUnit {
    #[default]
    Amps,
    /// Multiples of `capacity / 3600` A.
    CRate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CostConfig {
    /// `L = u / Q`; `capacity` defaults to the model capacity.
    SocRate {
        #[serde(default)]
        capacity: Option<f64>,
    },
    /// `L = x1`.
    SocIntegral,
    /// `L = x_state`, 1-based.
    StateComponent { state: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Horizon {
    /// s
    pub t_f: f64,
    /// s; defaults to `t_f / 2000`.
    #[serde(default)]
    pub dt: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyConfig {
    #[serde(default)]
    pub u_min: f64,
    /// Defaults to the input upper bound (in A).
    #[serde(default)]
    pub u_max: Option<f64>,
    #[serde(default)]
    pub bisection_tol: Option<f64>,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default = "default_policy_tol")]
    pub tol: f64,
    /// Defaults to `horizon.dt`.
    #[serde(default)]
    pub lookahead_dt: Option<f64>,
}

fn default_max_iter() -> usize {
    60
}

fn default_policy_tol() -> f64 {
    1e-6
}

impl Default for PolicyConfig {
    fn default() -> Self {
        Self {
            u_min: 0.0,
            u_max: None,
            bisection_tol: None,
            max_iter: default_max_iter(),
            tol: default_policy_tol(),
            lookahead_dt: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleConfig {
    pub n_steps: usize,
    /// Input levels in A; `n_levels` evenly spaced over `[u_min, u_max]` when omitted.
    #[serde(default)]
    pub levels: Option<Vec<f64>>,
    #[serde(default = "default_n_levels")]
    pub n_levels: usize,
    /// Integration step for the oracle; defaults to `horizon.dt`.
    #[serde(default)]
    pub dt: Option<f64>,
    #[serde(default = "default_cap")]
    pub cap: u64,
    #[serde(default = "default_policy_tol")]
    pub tol: f64,
}

fn default_n_levels() -> usize {
    11
}

fn default_cap() -> u64 {
    1_000_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckConfig {
    /// Per-state `[lo, hi]`; defaults to `[0, bound]` with `bound` the state's
    /// upper limit (or 1 when unconstrained).
    #[serde(default)]
    pub state_box: Option<Vec<[f64; 2]>>,
    /// Defaults to `[policy.u_min, policy.u_max]`.
    #[serde(default)]
    pub input_box: Option<[f64; 2]>,
    #[serde(default = "default_samples")]
    pub n_samples: usize,
}

fn default_samples() -> usize {
    512
}

impl Default for CheckConfig {
    fn default() -> Self {
        Self {
            state_box: None,
            input_box: None,
            n_samples: default_samples(),
        }
    }
}

/// Parses, resolves defaults and validates. `source` names the input in errors.
pub fn parse_config(text: &str, source: &str) -> Result<ExperimentConfig, ConfigError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let mut cfg: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let field = e.path().to_string();
        let inner = e.into_inner();
        ConfigError::Parse {
            file: source.to_string(),
            field,
            line: inner.line(),
            column: inner.column(),
            message: strip_position(&inner.to_string()),
        }
    })?;
    if cfg.schema_version != SCHEMA_VERSION {
        return Err(ConfigError::SchemaVersion(cfg.schema_version));
    }
    cfg.resolve()?;
    cfg.validate()?;
    Ok(cfg)
}

fn strip_position(msg: &str) -> String {
    match msg.rfind(" at line ") {
        Some(i) => msg[..i].to_string(),
        None => msg.to_string(),
    }
}

pub fn load_config(path: impl AsRef<Path>) -> Result<ExperimentConfig, ConfigError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config(&text, &path.display().to_string())
}

/// Pretty JSON with a trailing newline.
pub fn to_json(cfg: &ExperimentConfig) -> String {
    let mut s = serde_json::to_string_pretty(cfg).expect("config serialises");
    s.push('\n');
    s
}

pub fn save_config(cfg: &ExperimentConfig, path: impl AsRef<Path>) -> Result<(), ConfigError> {
    let path = path.as_ref();
    fs::write(path, to_json(cfg)).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn xref(msg: impl Into<String>) -> ConfigError {
    ConfigError::CrossReference(msg.into())
}

impl ModelConfig {
    pub fn kind_name(&self) -> &'static str {
        match self {
            ModelConfig::Ecm { .. } => "ecm",
            ModelConfig::ThermalEcm { .. } => "thermal_ecm",
            ModelConfig::PadeSpm { .. } => "pade_spm",
            ModelConfig::FdSpm { .. } => "fd_spm",
        }
    }

    pub fn n_states(&self) -> usize {
        match self {
            ModelConfig::Ecm { cell } => 1 + cell.rc_pairs.len(),
            ModelConfig::ThermalEcm { cell, .. } => 2 + cell.rc_pairs.len(),
            ModelConfig::PadeSpm { .. } => 3,
            ModelConfig::FdSpm { n_interior, .. } => *n_interior,
        }
    }

    /// Cell capacity in A·s when the model knows it.
    pub fn capacity(&self) -> Option<f64> {
        match self {
            ModelConfig::Ecm { cell } | ModelConfig::ThermalEcm { cell, .. } => Some(cell.capacity),
            ModelConfig::PadeSpm { capacity, .. } | ModelConfig::FdSpm { capacity, .. } => {
                *capacity
            }
        }
    }

    pub fn ecm_params(&self) -> Option<EcmParams> {
        match self {
            ModelConfig::Ecm { cell } | ModelConfig::ThermalEcm { cell, .. } => Some(cell.params()),
            _ => None,
        }
    }
}

impl ExperimentConfig {
    /// Input upper bound in A, if one is configured.
    pub fn input_bound(&self) -> Result<Option<f64>, ConfigError> {
        let mut bound: Option<f64> = None;
        for c in &self.constraints {
            if let ConstraintSpec::InputUpper { limit, unit } = c.spec {
                let amps = match unit {
                    CurrentUnit::Amps => limit,
                    CurrentUnit::CRate => {
                        let q = self.model.capacity().ok_or_else(|| {
                            xref("input bound in c_rate needs a model capacity (set `model.capacity`)")
                        })?;
                        limit * q / 3600.0
                    }
                };
                bound = Some(bound.map_or(amps, |b: f64| b.min(amps)));
            }
        }
        Ok(bound)
    }

    fn resolve(&mut self) -> Result<(), ConfigError> {
        let n = self.model.n_states();
        if self.initial_state.is_none() {
            self.initial_state = Some(vec![0.0; n]);
        }
        if self.horizon.dt.is_none() {
            self.horizon.dt = Some(self.horizon.t_f / DEFAULT_STEPS);
        }
        let dt = self.horizon.dt.unwrap_or_default();
        if let CostConfig::SocRate { capacity: None } = self.cost {
            let q = self.model.capacity().ok_or_else(|| {
                xref("cost soc_rate needs a capacity (set `cost.capacity` or `model.capacity`)")
            })?;
            self.cost = CostConfig::SocRate { capacity: Some(q) };
        }
        if self.policy.u_max.is_none() {
            let ub = self.input_bound()?.ok_or_else(|| {
                xref("policy.u_max is missing and no input_upper constraint is configured")
            })?;
            self.policy.u_max = Some(ub);
        }
        let (u_min, u_max) = (self.policy.u_min, self.policy.u_max.unwrap_or_default());
        if self.policy.bisection_tol.is_none() {
            self.policy.bisection_tol = Some(1e-9 * (u_max - u_min).abs());
        }
        if self.policy.lookahead_dt.is_none() {
            self.policy.lookahead_dt = Some(dt);
        }
        if let Some(o) = &mut self.oracle {
            if o.levels.is_none() {
                if o.n_levels < 2 {
                    return Err(xref("oracle.n_levels must be >= 2"));
                }
                let k = (o.n_levels - 1) as f64;
                o.levels = Some(
                    (0..o.n_levels)
                        .map(|i| u_min + (u_max - u_min) * i as f64 / k)
                        .collect(),
                );
            }
            o.n_levels = o.levels.as_ref().map_or(0, Vec::len);
            if o.dt.is_none() {
                o.dt = Some(dt);
            }
        }
        if self.check.state_box.is_none() {
            let mut bx: Vec<[f64; 2]> = vec![[0.0, 1.0]; n];
            for c in &self.constraints {
                if let ConstraintSpec::StateUpper { state, limit } = c.spec {
                    if (1..=n).contains(&state) && limit > 0.0 {
                        bx[state - 1][1] = limit;
                    }
                }
                if let (ConstraintSpec::Temperature { limit }, ModelConfig::ThermalEcm { .. }) =
                    (&c.spec, &self.model)
                {
                    if *limit > 0.0 {
                        bx[n - 1][1] = *limit;
                    }
                }
            }
            self.check.state_box = Some(bx);
        }
        if self.check.input_box.is_none() {
            self.check.input_box = Some([u_min, u_max]);
        }
        Ok(())
    }

    fn validate(&self) -> Result<(), ConfigError> {
        let n = self.model.n_states();
        let kind = self.model.kind_name();
        if self.constraints.is_empty() {
            return Err(xref("at least one constraint is required"));
        }
        for (k, c) in self.constraints.iter().enumerate() {
            match &c.spec {
                ConstraintSpec::StateUpper { state, .. } => {
                    if !(1..=n).contains(state) {
                        return Err(xref(format!(
                            "constraints[{k}]: state {state} out of range 1..={n} for model {kind}"
                        )));
                    }
                }
                ConstraintSpec::Voltage { .. } => {
                    if self.model.ecm_params().is_none() {
                        return Err(xref(format!(
                            "constraints[{k}]: voltage constraint needs an ecm or thermal_ecm model, found {kind}"
                        )));
                    }
                }
                ConstraintSpec::Temperature { .. } => {
                    if !matches!(self.model, ModelConfig::ThermalEcm { .. }) {
                        return Err(xref(format!(
                            "constraints[{k}]: temperature constraint needs a thermal_ecm model, found {kind}"
                        )));
                    }
                }
                ConstraintSpec::Plating {
                    table_csv,
                    concentration,
                    max_current,
                } => {
                    if !matches!(
                        self.model,
                        ModelConfig::PadeSpm { .. } | ModelConfig::FdSpm { .. }
                    ) {
                        return Err(xref(format!(
                            "constraints[{k}]: plating constraint needs a pade_spm or fd_spm model, found {kind}"
                        )));
                    }
                    let inline = concentration.is_some() || max_current.is_some();
                    if table_csv.is_some() == inline {
                        return Err(xref(format!(
                            "constraints[{k}]: give either table_csv or concentration/max_current"
                        )));
                    }
                    if inline && (concentration.is_none() || max_current.is_none()) {
                        return Err(xref(format!(
                            "constraints[{k}]: inline plating table needs both concentration and max_current"
                        )));
                    }
                }
                ConstraintSpec::InputUpper { .. } => {}
            }
        }
        if let CostConfig::StateComponent { state } = self.cost {
            if !(1..=n).contains(&state) {
                return Err(xref(format!("cost: state {state} out of range 1..={n}")));
            }
        }
        if let Some(x0) = &self.initial_state {
            if x0.len() != n {
                return Err(xref(format!(
                    "initial_state has {} entries, model {kind} has {n} states",
                    x0.len()
                )));
            }
        }
        if let Some(bx) = &self.check.state_box {
            if bx.len() != n {
                return Err(xref(format!(
                    "check.state_box has {} entries, model has {n} states",
                    bx.len()
                )));
            }
        }
        if let Some(o) = &self.oracle {
            if o.n_steps == 0 {
                return Err(xref("oracle.n_steps must be >= 1"));
            }
        }
        Ok(())
    }

    /// Builds the model, constraints, cost and policy. Relative plating table
    /// paths are resolved against `base_dir`.
    pub fn build(&self, base_dir: &Path) -> Result<Experiment, ConfigError> {
        let (sys, surface) = match &self.model {
            ModelConfig::Ecm { cell } => (build_ecm(&cell.params())?, None),
            ModelConfig::ThermalEcm { cell, thermal } => (
                build_thermal_coupled_ecm(&cell.params(), &thermal.params())?,
                None,
            ),
            ModelConfig::PadeSpm { a, b, c, .. } => {
                let (sys, out) = build_pade_spm(&PadeSpmParams {
                    a: *a,
                    b: *b,
                    c: *c,
                })?;
                (sys, Some(out))
            }
            ModelConfig::FdSpm {
                diffusivity,
                particle_radius,
                n_interior,
                surface_area,
                collector_area,
                thickness,
                electrode,
                faraday,
                ..
            } => {
                let (sys, out) = build_fd_spm(&FdSpmParams {
                    diffusivity: *diffusivity,
                    particle_radius: *particle_radius,
                    n_interior: *n_interior,
                    faraday: *faraday,
                    surface_area: *surface_area,
                    collector_area: *collector_area,
                    thickness: *thickness,
                    electrode_sign: match electrode {
                        Electrode::Cathode => ElectrodeSign::Cathode,
                        Electrode::Anode => ElectrodeSign::Anode,
                    },
                })?;
                (sys, Some(out))
            }
        };
        let ecm = self.model.ecm_params();
        let mut constraints = Vec::with_capacity(self.constraints.len());
        for cc in &self.constraints {
            let mut c: Constraint = match &cc.spec {
                ConstraintSpec::StateUpper { state, limit } => upper_bound_state(state - 1, *limit),
                ConstraintSpec::InputUpper { limit, unit } => {
                    let amps = match unit {
                        CurrentUnit::Amps => *limit,
                        CurrentUnit::CRate => {
                            limit * self.model.capacity().unwrap_or_default() / 3600.0
                        }
                    };
                    upper_bound_input(amps)
                }
                ConstraintSpec::Voltage { limit } => {
                    voltage_limit(ecm.as_ref().expect("validated: ECM family"), *limit)?
                }
                ConstraintSpec::Temperature { limit } => temperature_limit(
                    *limit,
                    thermal_temperature_index(ecm.as_ref().expect("validated: thermal")),
                ),
                ConstraintSpec::Plating {
                    table_csv,
                    concentration,
                    max_current,
                } => {
                    let table = match table_csv {
                        Some(p) => PlatingTable::from_csv_path(base_dir.join(p))?,
                        None => PlatingTable::new(
                            concentration.clone().unwrap_or_default(),
                            max_current.clone().unwrap_or_default(),
                        )?,
                    };
                    let out: LinearOutput = surface.clone().expect("validated: SPM model");
                    plating_constraint(table, move |x, u| out.eval(x, u))
                }
            };
            if let Some(name) = &cc.name {
                c = c.with_name(name.clone());
            }
            if let Some(t) = cc.tol_active {
                c = c.with_tol_active(t);
            }
            if let Some(t) = cc.tol_engaged {
                c = c.with_tol_engaged(t);
            }
            constraints.push(c);
        }
        let set = ConstraintSet::new(constraints)?;
        let cost = match self.cost {
            CostConfig::SocRate { capacity } => RunningCost::soc_rate(capacity.unwrap_or_default()),
            CostConfig::SocIntegral => RunningCost::soc_integral(),
            CostConfig::StateComponent { state } => RunningCost::state_component(state - 1),
        };
        let p = &self.policy;
        let mut policy = BangRidePolicy::new(
            set.clone(),
            p.u_min,
            p.u_max.unwrap_or_default(),
            p.lookahead_dt.unwrap_or_default(),
        )?
        .with_max_iter(p.max_iter)
        .with_tol(p.tol);
        if let Some(b) = p.bisection_tol {
            policy = policy.with_bisection_tol(b);
        }
        let state_box = self.check.state_box.clone().unwrap_or_default();
        let input_box = self
            .check
            .input_box
            .unwrap_or([p.u_min, p.u_max.unwrap_or_default()]);
        let check_box = SampleBox::new(
            state_box.iter().map(|b| (b[0], b[1])).collect(),
            vec![(input_box[0], input_box[1])],
        )?;
        let sampling = SamplingOptions {
            n_samples: self.check.n_samples,
            seed: self.seed,
            ..SamplingOptions::default()
        };
        let oracle = self.oracle.as_ref().map(|o| OracleProblem {
            t_f: self.horizon.t_f,
            dt: o.dt.unwrap_or_default(),
            n_steps: o.n_steps,
            levels: o.levels.clone().unwrap_or_default(),
        });
        Ok(Experiment {
            sys,
            x0: self
                .initial_state
                .clone()
                .unwrap_or_else(|| vec![0.0; self.model.n_states()]),
            set,
            cost,
            ecm,
            surface,
            policy,
            check_box,
            sampling,
            oracle,
            t_f: self.horizon.t_f,
            dt: self.horizon.dt.unwrap_or_default(),
        })
    }
}

/// Everything a subcommand needs, built from a resolved config.
pub struct Experiment {
    pub sys: ControlSystem,
    pub x0: Vec<f64>,
    /// Constraints exactly as configured.
    pub set: ConstraintSet,
    pub cost: RunningCost,
    pub ecm: Option<EcmParams>,
    /// Surface-concentration output for SPM models.
    pub surface: Option<LinearOutput>,
    /// Policy set: the configured constraints plus an input bound if none was given.
    pub policy: BangRidePolicy,
    pub check_box: SampleBox,
    pub sampling: SamplingOptions,
    pub oracle: Option<OracleProblem>,
    pub t_f: f64,
    pub dt: f64,
}
