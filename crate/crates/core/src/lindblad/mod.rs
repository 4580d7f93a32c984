//! Four-level atoms under the EIT/blockade gate: dense density matrices, the
//! gate Hamiltonian, the master equation and its integrators.
//!
//! Levels per atom are `|0>`, `|1>` (qubit), `|e>` (intermediate) and `|x>`
//! (Rydberg), indexed 0..4.

mod calibrate;
mod density;
mod eigen;
mod extract;
mod gate;
mod hamiltonian;
mod integrate;

pub use calibrate::{blockaded_transfer, calibrate_amplitude, eit_transfer, transfer, Calibration};
pub use density::{
    apply_perfect_unitary, digit, dim_for, in_qubit_subspace, kron_all, mixed_qubit, partial_trace_register,
    with_digit, DensityMatrix, InvariantReport, InvariantTolerances, PerfectUnitary, ReducedControl,
    DEFAULT_LEAKAGE_THRESHOLD,
};
pub use extract::{conditional_map, extract_gate_unitary, fit_pauli, GateFit, POOR_FIT_THRESHOLD};
pub use gate::{BlockState, ControlledGate, FringeCoefficients, GateChannel, SplitOptions};
pub use hamiltonian::{build_hamiltonian, build_hamiltonian_masked, lindblad_rhs, GateSetup, ShiftTable};
pub use integrate::{integrate, integrate_setup, IntegrateOptions, IntegrateStats};

pub use crate::rydberg::PulseSchedule;

use crate::error::{invalid, Result};
use crate::units;

pub const LEVEL_0: usize = 0;
pub const LEVEL_1: usize = 1;
pub const LEVEL_E: usize = 2;
pub const LEVEL_X: usize = 3;

/// Control plus three register atoms.
pub const MAX_ATOMS: usize = 4;

/// Level scheme and rates, all in rad/s.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct AtomLevelScheme {
    pub delta_e: f64,
    /// Rate entering each `|e> -> |0>`, `|e> -> |1>` branch.
    pub gamma_e: f64,
    pub gamma_dph: f64,
    /// Loss of `|x>` population to an untracked sink; zero by default.
    pub gamma_ryd: f64,
}

impl Default for AtomLevelScheme {
    fn default() -> Self {
        Self {
            delta_e: units::mhz_to_rad(1000.0),
            gamma_e: units::mhz_to_rad(6.065),
            gamma_dph: 0.0,
            gamma_ryd: 0.0,
        }
    }
}

impl AtomLevelScheme {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta_e > 0.0) {
            return Err(invalid("delta_e", "must be > 0"));
        }
        if !(self.gamma_e >= 0.0) || !(self.gamma_dph >= 0.0) || !(self.gamma_ryd >= 0.0) {
            return Err(invalid("rates", "must be >= 0"));
        }
        Ok(())
    }

    pub fn lossless(&self) -> Self {
        Self { gamma_e: 0.0, gamma_dph: 0.0, gamma_ryd: 0.0, ..*self }
    }

    /// Total population decay rate out of `|e>` implied by the decay terms:
    /// each of the two branches removes `gamma_e`.
    pub fn effective_e_decay_rate(&self) -> f64 {
        2.0 * self.gamma_e
    }

    /// Decay rate of a `|0><1|` coherence under the dephasing terms alone
    /// (only `|1>` of the pair is dephased).
    pub fn qubit_coherence_decay_rate(&self) -> f64 {
        0.5 * self.gamma_dph
    }
}
