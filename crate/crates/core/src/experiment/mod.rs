//! Monte-Carlo orchestration: the full master-equation protocol for up to
//! three register atoms, the per-atom gate model and its contrast curve, the
//! large-register model with loading and loss statistics, and the gravity
//! preset.
//!
//! Every routine is split into independent work items (repetitions, scan
//! points) with their own random streams plus a deterministic aggregator, so
//! a caller can evaluate items in any order or in parallel.

mod full;
mod gates;
mod large_n;

pub use full::{aggregate_full, full_repetition, repetition_invariants, run_full_protocol};
pub use gates::{
    aggregate_contrast, contrast_repetition, fit_exponential, gate_bank, gate_contrast_curve, gate_record,
    pauli_matrix, ExponentialFit, GateContrastModel, GateRecord,
};
pub use large_n::{large_n_point, run_large_n};

use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng;

use crate::analytic::NoiseParams;
use crate::error::{invalid, Error, Result};
use crate::lindblad::{AtomLevelScheme, ShiftTable};
use crate::rydberg::{pair_shift, InteractionParams, PulseSchedule, R_FLOOR_UM};
use crate::trap::{distance, sample_positions, LossModel, Position, TrapGeometry};
use crate::units;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    FullDynamics,
    LargeNModel,
}

/// Fraction of the nominal laser linewidth (Hz) used as the dephasing rate
/// `gamma_dph` (1/s) by [`dephasing_from_linewidth`].
pub const LINEWIDTH_TO_DEPHASING: f64 = 1.0;

/// `gamma_dph` in 1/s for a laser linewidth in Hz.
pub fn dephasing_from_linewidth(linewidth_hz: f64) -> f64 {
    LINEWIDTH_TO_DEPHASING * linewidth_hz
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct GateConfig {
    pub scheme: AtomLevelScheme,
    pub pulses: PulseSchedule,
    /// Time slices of the split-step propagator per gate.
    pub slices: usize,
    /// Dephase the control while it waits in the Rydberg level.
    pub control_decoherence: bool,
    /// Include register-register interactions in the full dynamics.
    pub register_interactions: bool,
    pub control_register: InteractionParams,
    pub register_register: InteractionParams,
}

impl Default for GateConfig {
    fn default() -> Self {
        Self {
            scheme: AtomLevelScheme::default(),
            pulses: PulseSchedule::default(),
            slices: 200,
            control_decoherence: true,
            register_interactions: true,
            control_register: InteractionParams::control_register(),
            register_register: InteractionParams::register_register(),
        }
    }
}

impl GateConfig {
    pub fn validate(&self) -> Result<()> {
        self.scheme.validate()?;
        self.pulses.params.validate()?;
        self.control_register.validate()?;
        self.register_register.validate()?;
        if self.slices == 0 {
            return Err(invalid("gate.slices", "must be >= 1"));
        }
        if !(self.pulses.amplitude_scale > 0.0) {
            return Err(invalid("gate.pulses.amplitude_scale", "must be > 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TrapConfig {
    pub register: TrapGeometry,
    pub control: TrapGeometry,
    pub loss: LossModel,
}

impl Default for TrapConfig {
    fn default() -> Self {
        Self { register: TrapGeometry::register(), control: TrapGeometry::control(), loss: LossModel::default() }
    }
}

/// Switches of the large-register model.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LargeNOptions {
    /// Two-body loss events zero the repetition.
    pub losses: bool,
    /// Add the summed per-atom gate phases to every fringe term. The contrast
    /// curve already contains their averaged effect, so this counts it twice.
    pub gate_phases: bool,
    /// Largest register used when measuring the gate contrast curve.
    pub contrast_max_n: usize,
    /// Records in the gate-phase bank.
    pub bank_size: usize,
}

impl Default for LargeNOptions {
    fn default() -> Self {
        Self { losses: true, gate_phases: false, contrast_max_n: 9, bank_size: 200 }
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ExperimentConfig {
    pub mode: Mode,
    /// Register size; the Poisson mean in the large-register model.
    pub mean_n_r: f64,
    pub noise: NoiseParams,
    /// Detunings `delta omega / omega_0`.
    pub scan: Vec<f64>,
    /// rad/s
    pub omega0: f64,
    /// Free-evolution time (s).
    pub t: f64,
    pub nu: u32,
    pub seed: u64,
    /// Report exact expectation values instead of sampled outcomes.
    pub probabilities_only: bool,
    pub gate: GateConfig,
    pub trap: TrapConfig,
    pub large_n: LargeNOptions,
}

/// Largest register handled by the full dynamics.
pub const FULL_DYNAMICS_MAX_N: usize = 3;

impl ExperimentConfig {
    /// Full-dynamics runs with `omega_0 t = 4 pi`, scanned over +-0.25.
    pub fn full_dynamics(n_r: usize, linewidth_hz: f64) -> Self {
        let omega0 = units::hz_to_rad(1.0e4);
        let mut gate = GateConfig::default();
        gate.scheme.gamma_dph = dephasing_from_linewidth(linewidth_hz);
        Self {
            mode: Mode::FullDynamics,
            mean_n_r: n_r as f64,
            noise: NoiseParams { p_c: 0.95, p_r: 0.95 },
            scan: linspace(-0.25, 0.25, 21),
            omega0,
            t: 4.0 * core::f64::consts::PI / omega0,
            nu: 49,
            seed: 1,
            probabilities_only: false,
            gate,
            trap: TrapConfig::default(),
            large_n: LargeNOptions::default(),
        }
    }

    /// The 25-atom gravity configuration.
    pub fn large_n(linewidth_hz: f64) -> Self {
        let mut gate = GateConfig::default();
        gate.scheme.gamma_dph = dephasing_from_linewidth(linewidth_hz);
        gate.register_interactions = false;
        Self {
            mode: Mode::LargeNModel,
            mean_n_r: 25.0,
            noise: NoiseParams { p_c: 0.95, p_r: 0.95 },
            scan: linspace(-0.15e-3, 0.15e-3, 31),
            omega0: GravityPreset::Nominal.omega(),
            t: 375e-6,
            nu: 49,
            seed: 1,
            probabilities_only: false,
            gate,
            trap: TrapConfig::default(),
            large_n: LargeNOptions::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.noise.validate()?;
        self.gate.validate()?;
        self.trap.register.validate()?;
        self.trap.control.validate()?;
        self.trap.loss.validate()?;
        if self.scan.is_empty() {
            return Err(invalid("scan", "must not be empty"));
        }
        if self.scan.iter().any(|x| !x.is_finite()) {
            return Err(invalid("scan", "must be finite"));
        }
        if self.nu == 0 {
            return Err(invalid("nu", "must be >= 1"));
        }
        if !(self.t >= 0.0) || !self.t.is_finite() {
            return Err(invalid("t", "must be finite and >= 0"));
        }
        if !self.omega0.is_finite() {
            return Err(invalid("omega0", "must be finite"));
        }
        match self.mode {
            Mode::FullDynamics => {
                let n = self.mean_n_r;
                if n.fract() != 0.0 || !(1.0..=FULL_DYNAMICS_MAX_N as f64).contains(&n) {
                    return Err(invalid("mean_n_r", "full dynamics needs a fixed register of 1 to 3 atoms"));
                }
            }
            Mode::LargeNModel => {
                if !(self.mean_n_r > 0.0) || !self.mean_n_r.is_finite() {
                    return Err(invalid("mean_n_r", "must be finite and > 0"));
                }
                if self.large_n.contrast_max_n == 0 || self.large_n.bank_size == 0 {
                    return Err(invalid("large_n", "contrast_max_n and bank_size must be >= 1"));
                }
            }
        }
        Ok(())
    }

    /// Free-evolution phase `omega t` at scan point `x`.
    pub fn phase(&self, x: f64) -> f64 {
        self.omega0 * (1.0 + x) * self.t
    }
}

/// `n` evenly spaced values over `[a, b]`.
pub fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => alloc::vec![a],
        _ => (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct FringePoint {
    pub delta_omega_over_omega0: f64,
    /// Sampled `<sigma_Z>`, or the exact value in probability mode.
    pub sigma_z_mean: f64,
    /// Expectation of `<sigma_Z>` over the drawn configurations.
    pub sigma_z_exact: f64,
    pub n0: u32,
    pub n1: u32,
    pub losses: u32,
    /// Mean register population left outside the qubit subspace; outcomes
    /// are renormalised over the qubit subspace.
    pub leakage: f64,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct FringeDataset {
    pub points: Vec<FringePoint>,
    pub config: ExperimentConfig,
}

impl FringeDataset {
    pub fn x(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.delta_omega_over_omega0).collect()
    }

    pub fn sigma_z(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.sigma_z_mean).collect()
    }

    /// Tally conservation `n0 + n1 + losses = nu` (sampled mode only).
    pub fn check_tallies(&self) -> Result<()> {
        if self.config.probabilities_only {
            return Ok(());
        }
        for p in &self.points {
            let sum = p.n0 + p.n1 + p.losses;
            if sum != self.config.nu {
                return Err(Error::InvariantViolation {
                    what: "tally sum",
                    value: sum as f64,
                    limit: self.config.nu as f64,
                });
            }
        }
        Ok(())
    }
}

/// Phase rate `m g dz / hbar` (rad/s) for a vertical separation `dz_um`.
pub fn gravity_omega(dz_um: f64, mass: f64, g: f64) -> Result<f64> {
    if !(dz_um >= 0.0) {
        return Err(invalid("dz", "must be >= 0"));
    }
    Ok(mass * g * dz_um * units::UM_TO_M / units::HBAR)
}

/// The two quoted 2.5 um gravity rates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GravityPreset {
    /// `2 pi x 5326` rad/s as quoted.
    Nominal,
    /// `2.5 x (2 pi x 2145)` rad/s, linear in the per-um rate.
    LinearScaling,
}

impl GravityPreset {
    pub const SEPARATION_UM: f64 = 2.5;

    pub fn omega(self) -> f64 {
        match self {
            GravityPreset::Nominal => units::hz_to_rad(5326.0),
            GravityPreset::LinearScaling => units::hz_to_rad(5363.0),
        }
    }
}

/// Control and register positions with every pair that enters the gate at or
/// beyond the interaction floor; rejected draws are redrawn from the same
/// stream.
pub(crate) fn draw_positions<R: Rng + ?Sized>(
    cfg: &ExperimentConfig,
    n_r: usize,
    register_pairs: bool,
    rng: &mut R,
) -> Result<(Position, Vec<Position>)> {
    const MAX_ATTEMPTS: usize = 10_000;
    for _ in 0..MAX_ATTEMPTS {
        let control = sample_positions(&cfg.trap.control, 1, rng)[0];
        let reg = sample_positions(&cfg.trap.register, n_r, rng);
        let near_control = reg.iter().any(|r| distance(&control, r) < R_FLOOR_UM);
        let near_pair = register_pairs
            && (0..n_r).any(|i| (0..i).any(|j| distance(&reg[i], &reg[j]) < R_FLOOR_UM));
        if !near_control && !near_pair {
            return Ok((control, reg));
        }
    }
    Err(invalid("trap", "could not draw atoms outside the interaction floor"))
}

/// Gate shifts in rad/s: control-register list and register table.
pub(crate) fn gate_shifts(
    cfg: &ExperimentConfig,
    control: &Position,
    reg: &[Position],
    register_pairs: bool,
) -> Result<(Vec<f64>, ShiftTable)> {
    let vc = reg
        .iter()
        .map(|r| pair_shift(distance(control, r), &cfg.gate.control_register).map(units::mhz_to_rad))
        .collect::<Result<Vec<_>>>()?;
    let mut table = ShiftTable::zeros(reg.len());
    if register_pairs {
        for i in 0..reg.len() {
            for j in 0..i {
                let v = pair_shift(distance(&reg[i], &reg[j]), &cfg.gate.register_register)?;
                table.set(i, j, units::mhz_to_rad(v));
            }
        }
    }
    Ok((vc, table))
}

/// One projective shot on the control: `true` for outcome 0.
pub(crate) fn shot<R: Rng + ?Sized>(p0: f64, rng: &mut R) -> bool {
    rng.gen::<f64>() < p0
}
