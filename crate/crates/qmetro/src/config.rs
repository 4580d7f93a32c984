//! TOML run configuration.
//!
//! Frequencies carry an `_hz` suffix and are converted to rad/s here; times
//! are in seconds and lengths in micrometres. A file is merged over the
//! defaults, then `QMETRO__SECTION__KEY` environment variables and
//! `--set section.key=value` overrides are applied, in that order.

use std::path::Path;

use qmetro_core::analytic::NoiseParams;
use qmetro_core::experiment::{ExperimentConfig, GravityPreset, LargeNOptions, Mode};
use qmetro_core::rydberg::{InteractionParams, PairClass};
use qmetro_core::trap::{LossModel, TrapGeometry};
use qmetro_core::units::{hz_to_rad, rad_to_hz};
use serde::{Deserialize, Serialize};
use toml::Value;

use crate::CliError;

/// Environment variables with this prefix override config keys; `__`
/// separates path segments.
pub const ENV_PREFIX: &str = "QMETRO__";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FileConfig {
    pub seed: u64,
    pub analytic: AnalyticSection,
    pub experiment: ExperimentSection,
    pub sweep: SweepSection,
    pub calibrate: CalibrateSection,
}

impl Default for FileConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            analytic: AnalyticSection::default(),
            experiment: ExperimentSection::default(),
            sweep: SweepSection::default(),
            calibrate: CalibrateSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalyticSection {
    pub n_r: usize,
    /// Poisson-loaded register mean; the fixed `n_r` is used when absent.
    pub poisson_mean: Option<f64>,
    pub p_c: f64,
    /// One output file per value.
    pub p_r: Vec<f64>,
    pub t: f64,
    pub nu: u32,
    pub phase_min: f64,
    pub phase_max: f64,
    pub points: usize,
}

impl Default for AnalyticSection {
    fn default() -> Self {
        Self {
            n_r: 25,
            poisson_mean: None,
            p_c: 1.0,
            p_r: vec![0.0, 0.95],
            t: 375e-6,
            nu: 1,
            phase_min: 0.0,
            phase_max: 4.0 * std::f64::consts::PI,
            points: 401,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitChoice {
    /// Cosine at the register size in full dynamics, Poisson envelope otherwise.
    Auto,
    Cosine,
    PoissonEnvelope,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentSection {
    pub mode: Mode,
    pub mean_n_r: Option<f64>,
    pub p_c: f64,
    pub p_r: f64,
    /// Explicit `delta omega / omega_0` values; overrides the range below.
    pub scan: Option<Vec<f64>>,
    pub scan_min: Option<f64>,
    pub scan_max: Option<f64>,
    pub scan_points: Option<usize>,
    pub omega0_hz: Option<f64>,
    /// Named gravity rate; ignored when `omega0_hz` is set.
    pub gravity_preset: Option<GravityPreset>,
    pub t: Option<f64>,
    pub nu: u32,
    pub linewidth_hz: f64,
    pub probabilities_only: bool,
    pub fit_model: FitChoice,
    pub gate: GateSection,
    pub trap: TrapSection,
    pub large_n: LargeNOptions,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        Self {
            mode: Mode::FullDynamics,
            mean_n_r: None,
            p_c: 0.95,
            p_r: 0.95,
            scan: None,
            scan_min: None,
            scan_max: None,
            scan_points: None,
            omega0_hz: None,
            gravity_preset: None,
            t: None,
            nu: 49,
            linewidth_hz: 1e4,
            probabilities_only: false,
            fit_model: FitChoice::Auto,
            gate: GateSection::default(),
            trap: TrapSection::default(),
            large_n: LargeNOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairSection {
    pub c_dd_hz_um3: f64,
    pub delta_def_hz: f64,
}

impl PairSection {
    fn from_core(p: InteractionParams) -> Self {
        Self { c_dd_hz_um3: p.c_dd * 1e6, delta_def_hz: p.delta_def * 1e6 }
    }

    fn to_core(self, class: PairClass) -> InteractionParams {
        InteractionParams { c_dd: self.c_dd_hz_um3 * 1e-6, delta_def: self.delta_def_hz * 1e-6, class }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GateSection {
    pub slices: usize,
    pub delta_e_hz: f64,
    pub gamma_e_hz: f64,
    /// Rydberg loss rate (1/s).
    pub gamma_ryd: f64,
    pub tau: f64,
    pub amplitude_scale: f64,
    pub omega3_scaled: bool,
    pub control_decoherence: bool,
    /// Defaults to on in full dynamics and off in the large-register model.
    pub register_interactions: Option<bool>,
    pub control_register: PairSection,
    pub register_register: PairSection,
}

impl Default for GateSection {
    fn default() -> Self {
        let g = qmetro_core::experiment::GateConfig::default();
        Self {
            slices: g.slices,
            delta_e_hz: rad_to_hz(g.scheme.delta_e),
            gamma_e_hz: rad_to_hz(g.scheme.gamma_e),
            gamma_ryd: g.scheme.gamma_ryd,
            tau: g.pulses.params.tau,
            amplitude_scale: g.pulses.amplitude_scale,
            omega3_scaled: g.pulses.omega3_scaled,
            control_decoherence: g.control_decoherence,
            register_interactions: None,
            control_register: PairSection::from_core(g.control_register),
            register_register: PairSection::from_core(g.register_register),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrapSection {
    pub register: TrapGeometry,
    pub control: TrapGeometry,
    pub loss: LossModel,
}

impl Default for TrapSection {
    fn default() -> Self {
        Self { register: TrapGeometry::register(), control: TrapGeometry::control(), loss: LossModel::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepAxis {
    /// Dotted config key, e.g. `experiment.p_r`.
    pub key: String,
    pub values: Vec<Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    pub axes: Vec<SweepAxis>,
    pub max_cells: usize,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self { axes: Vec::new(), max_cells: 512 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CalibrateSection {
    pub bracket: [f64; 2],
}

impl Default for CalibrateSection {
    fn default() -> Self {
        Self { bracket: [1.5, 3.5] }
    }
}

pub const MAX_SWEEP_AXES: usize = 3;

impl FileConfig {
    pub fn experiment_config(&self) -> Result<ExperimentConfig, CliError> {
        let e = &self.experiment;
        let n = e.mean_n_r.unwrap_or(match e.mode {
            Mode::FullDynamics => 1.0,
            Mode::LargeNModel => 25.0,
        });
        let mut cfg = match e.mode {
            Mode::FullDynamics => {
                if n.fract() != 0.0 || n < 1.0 {
                    return Err(CliError::Validation(format!(
                        "experiment.mean_n_r = {n}: full dynamics needs a whole number of register atoms"
                    )));
                }
                ExperimentConfig::full_dynamics(n as usize, e.linewidth_hz)
            }
            Mode::LargeNModel => ExperimentConfig::large_n(e.linewidth_hz),
        };
        cfg.mean_n_r = n;
        cfg.noise = NoiseParams { p_c: e.p_c, p_r: e.p_r };
        cfg.nu = e.nu;
        cfg.seed = self.seed;
        cfg.probabilities_only = e.probabilities_only;
        if let Some(w) = e.omega0_hz {
            let t_default = 4.0 * std::f64::consts::PI / hz_to_rad(w);
            cfg.omega0 = hz_to_rad(w);
            if e.mode == Mode::FullDynamics {
                cfg.t = t_default;
            }
        } else if let Some(p) = e.gravity_preset {
            cfg.omega0 = p.omega();
        }
        if let Some(t) = e.t {
            cfg.t = t;
        }
        if let Some(s) = &e.scan {
            cfg.scan = s.clone();
        } else if e.scan_min.is_some() || e.scan_max.is_some() || e.scan_points.is_some() {
            let (lo, hi) = (cfg.scan[0], *cfg.scan.last().unwrap_or(&0.0));
            cfg.scan = qmetro_core::experiment::linspace(
                e.scan_min.unwrap_or(lo),
                e.scan_max.unwrap_or(hi),
                e.scan_points.unwrap_or(cfg.scan.len()),
            );
        }
        let g = &e.gate;
        cfg.gate.slices = g.slices;
        cfg.gate.scheme.delta_e = hz_to_rad(g.delta_e_hz);
        cfg.gate.scheme.gamma_e = hz_to_rad(g.gamma_e_hz);
        cfg.gate.scheme.gamma_ryd = g.gamma_ryd;
        cfg.gate.pulses.params.delta_e = hz_to_rad(g.delta_e_hz);
        cfg.gate.pulses.params.tau = g.tau;
        cfg.gate.pulses.amplitude_scale = g.amplitude_scale;
        cfg.gate.pulses.omega3_scaled = g.omega3_scaled;
        cfg.gate.control_decoherence = g.control_decoherence;
        if let Some(r) = g.register_interactions {
            cfg.gate.register_interactions = r;
        }
        cfg.gate.control_register = g.control_register.to_core(PairClass::ControlRegister);
        cfg.gate.register_register = g.register_register.to_core(PairClass::RegisterRegister);
        cfg.trap.register = e.trap.register;
        cfg.trap.control = e.trap.control;
        cfg.trap.loss = e.trap.loss;
        cfg.large_n = e.large_n;
        cfg.validate().map_err(|err| CliError::Validation(err.to_string()))?;
        Ok(cfg)
    }

    pub fn validate_analytic(&self) -> Result<(), CliError> {
        let a = &self.analytic;
        let bad = |m: &str| Err(CliError::Validation(format!("analytic: {m}")));
        if a.points == 0 {
            return bad("empty phase grid (points = 0)");
        }
        if !(a.phase_max >= a.phase_min) {
            return bad("phase_max must be >= phase_min");
        }
        if a.p_r.is_empty() {
            return bad("p_r needs at least one value");
        }
        if !(a.t > 0.0) {
            return bad("t must be > 0");
        }
        for &p in &a.p_r {
            NoiseParams::new(a.p_c, p).map_err(|e| CliError::Validation(e.to_string()))?;
        }
        Ok(())
    }

    pub fn validate_sweep(&self) -> Result<usize, CliError> {
        let s = &self.sweep;
        if s.axes.is_empty() {
            return Err(CliError::Validation("sweep: no axes given".into()));
        }
        if s.axes.len() > MAX_SWEEP_AXES {
            return Err(CliError::Validation(format!("sweep: at most {MAX_SWEEP_AXES} axes")));
        }
        let cells = s.axes.iter().map(|a| a.values.len()).product::<usize>();
        if cells == 0 {
            return Err(CliError::Validation("sweep: an axis has no values".into()));
        }
        if cells > s.max_cells {
            return Err(CliError::Validation(format!("sweep: {cells} cells exceed max_cells = {}", s.max_cells)));
        }
        Ok(cells)
    }
}

/// Parse the right-hand side of an override as a TOML value, falling back to
/// a bare string.
pub fn parse_value(raw: &str) -> Value {
    let raw = raw.trim();
    match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| Value::String(raw.to_string())),
        Err(_) => Value::String(raw.to_string()),
    }
}

/// Set `path` (dotted) in `root`, creating tables as needed.
pub fn set_path(root: &mut Value, path: &str, value: Value) -> Result<(), CliError> {
    let parts: Vec<&str> = path.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(CliError::Validation(format!("bad key `{path}`")));
    }
    let mut cur = root;
    for p in &parts[..parts.len() - 1] {
        let table = cur
            .as_table_mut()
            .ok_or_else(|| CliError::Validation(format!("`{path}`: `{p}` is not inside a table")))?;
        cur = table.entry(p.to_string()).or_insert_with(|| Value::Table(Default::default()));
    }
    let table = cur
        .as_table_mut()
        .ok_or_else(|| CliError::Validation(format!("`{path}`: parent is not a table")))?;
    table.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

fn merge(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Table(b), Value::Table(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// Fully resolved configuration together with the TOML tree it came from.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub config: FileConfig,
    pub tree: Value,
}

impl Resolved {
    pub fn from_tree(tree: Value) -> Result<Self, CliError> {
        let config: FileConfig = tree
            .clone()
            .try_into()
            .map_err(|e: toml::de::Error| CliError::Validation(format!("config: {}", e.message())))?;
        Ok(Self { config, tree })
    }

    /// Same tree with one more override applied.
    pub fn with(&self, path: &str, value: Value) -> Result<Self, CliError> {
        let mut tree = self.tree.clone();
        set_path(&mut tree, path, value)?;
        Self::from_tree(tree)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(&self.tree).unwrap_or_default()
    }
}

pub fn default_tree() -> Value {
    Value::try_from(FileConfig::default()).expect("defaults serialise")
}

/// Defaults, then the file, then environment overrides, then `--set` pairs.
pub fn resolve(
    file: Option<&Path>,
    env: impl IntoIterator<Item = (String, String)>,
    sets: &[String],
) -> Result<Resolved, CliError> {
    let mut tree = default_tree();
    if let Some(path) = file {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Validation(format!("cannot read {}: {e}", path.display())))?;
        let user: Value = toml::from_str::<toml::Table>(&text)
            .map(Value::Table)
            .map_err(|e| CliError::Validation(format!("{}: {}", path.display(), e.message())))?;
        merge(&mut tree, user);
    }
    let mut env: Vec<(String, String)> = env.into_iter().filter(|(k, _)| k.starts_with(ENV_PREFIX)).collect();
    env.sort();
    for (k, v) in env {
        let key = k[ENV_PREFIX.len()..].to_ascii_lowercase().replace("__", ".");
        set_path(&mut tree, &key, parse_value(&v))?;
    }
    for s in sets {
        let (k, v) = s
            .split_once('=')
            .ok_or_else(|| CliError::Validation(format!("--set `{s}`: expected KEY=VALUE")))?;
        set_path(&mut tree, k.trim(), parse_value(v))?;
    }
    Resolved::from_tree(tree)
}
