//! Strongest-pair Rydberg interaction and the gate pulse shapes.
//!
//! Interactions are in MHz (cyclic) and micrometres; pulses in rad/s and s.

use core::f64::consts::PI;
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{invalid, Error, Result};
use crate::units;

/// Positions closer than this are treated as a sampling pathology.
pub const R_FLOOR_UM: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairClass {
    ControlRegister,
    RegisterRegister,
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct InteractionParams {
    /// Dipole-dipole coefficient (MHz um^3).
    pub c_dd: f64,
    /// Signed Forster defect (MHz).
    pub delta_def: f64,
    pub class: PairClass,
}

impl InteractionParams {
    pub fn control_register() -> Self {
        Self { c_dd: 2.92e4, delta_def: -196.0, class: PairClass::ControlRegister }
    }

    pub fn register_register() -> Self {
        Self { c_dd: 2.84e4, delta_def: -613.0, class: PairClass::RegisterRegister }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.c_dd > 0.0) || !self.c_dd.is_finite() {
            return Err(invalid("c_dd", "must be > 0"));
        }
        if self.delta_def == 0.0 || !self.delta_def.is_finite() {
            return Err(invalid("delta_def", "must be finite and non-zero"));
        }
        Ok(())
    }
}

/// Pair shift `V = (D - sgn(D) sqrt(D^2 + 4 C^2 / r^6)) / 2` in MHz.
pub fn pair_shift(r_um: f64, p: &InteractionParams) -> Result<f64> {
    if !(r_um >= R_FLOOR_UM) {
        return Err(Error::DistanceBelowFloor { r: r_um, floor: R_FLOOR_UM });
    }
    let d = p.delta_def;
    let x = p.c_dd / (r_um * r_um * r_um);
    // Written to avoid cancellation at large r: D - sgn(D) sqrt(D^2 + 4x^2)
    // = -sgn(D) 4x^2 / (|D| + sqrt(D^2 + 4x^2)).
    let root = (d * d + 4.0 * x * x).sqrt();
    Ok(-d.signum() * 2.0 * x * x / (d.abs() + root))
}

/// Crossover distance `(2 C / |D|)^(1/3)` in um.
pub fn r_max(p: &InteractionParams) -> f64 {
    (2.0 * p.c_dd / p.delta_def.abs()).cbrt()
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PulseParams {
    /// Intermediate-state detuning (rad/s).
    pub delta_e: f64,
    /// Gate duration (s).
    pub tau: f64,
}

impl Default for PulseParams {
    fn default() -> Self {
        Self { delta_e: units::mhz_to_rad(1000.0), tau: 0.5e-6 }
    }
}

impl PulseParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta_e > 0.0) {
            return Err(invalid("delta_e", "must be > 0"));
        }
        if !(self.tau > 0.0) {
            return Err(invalid("tau", "must be > 0"));
        }
        Ok(())
    }

    /// Peak of the unscaled Raman pulse, `sqrt(8 D_e / 3 tau)`.
    pub fn omega2_peak(&self) -> f64 {
        (8.0 * self.delta_e / (3.0 * self.tau)).sqrt()
    }
}

/// Unscaled Raman envelope `sqrt(8 D_e / 3 tau) sin^2(pi t / tau)`, zero outside `[0, tau]`.
pub fn omega2(t: f64, p: &PulseParams) -> f64 {
    if !(0.0..=p.tau).contains(&t) {
        return 0.0;
    }
    let s = (PI * t / p.tau).sin();
    p.omega2_peak() * s * s
}

/// Unscaled coupling `10 sqrt(4 D_e / 3 tau)`.
pub fn omega3(p: &PulseParams) -> f64 {
    10.0 * (4.0 * p.delta_e / (3.0 * p.tau)).sqrt()
}

/// Pulse shapes together with the calibrated amplitude factor.
///
/// `amplitude_scale` multiplies the Raman envelope; the Rydberg coupling keeps
/// its printed value unless `omega3_scaled` is set.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PulseSchedule {
    pub params: PulseParams,
    pub amplitude_scale: f64,
    /// When false, the coupling to the Rydberg level is switched off
    /// (blockade-lifted limit used for calibration).
    pub omega3_on: bool,
    /// Apply `amplitude_scale` to the Rydberg coupling as well.
    #[serde(default)]
    pub omega3_scaled: bool,
}

/// `sqrt(2 pi)`: the calibrated factor, since a Raman pi pulse needs
/// `integral Omega_2^2 dt = 2 pi D_e` and the unscaled shape gives `D_e`.
pub const DEFAULT_AMPLITUDE_SCALE: f64 = 2.506_628_274_631_000_2;

impl Default for PulseSchedule {
    fn default() -> Self {
        Self { params: PulseParams::default(), amplitude_scale: DEFAULT_AMPLITUDE_SCALE, omega3_on: true, omega3_scaled: false }
    }
}

impl PulseSchedule {
    pub fn new(params: PulseParams, amplitude_scale: f64) -> Result<Self> {
        params.validate()?;
        if !(amplitude_scale > 0.0) || !amplitude_scale.is_finite() {
            return Err(invalid("amplitude_scale", "must be finite and > 0"));
        }
        Ok(Self { params, amplitude_scale, omega3_on: true, omega3_scaled: false })
    }

    fn omega3_factor(&self) -> f64 {
        if self.omega3_scaled {
            self.amplitude_scale
        } else {
            1.0
        }
    }

    pub fn tau(&self) -> f64 {
        self.params.tau
    }

    pub fn omega2(&self, t: f64) -> f64 {
        self.amplitude_scale * omega2(t, &self.params)
    }

    pub fn omega3(&self) -> f64 {
        if self.omega3_on {
            self.omega3_factor() * omega3(&self.params)
        } else {
            0.0
        }
    }

    /// Light shift scale `Omega_3^2 / (4 D_e)` that the blockade must beat.
    pub fn blockade_scale(&self) -> f64 {
        let o = self.omega3_factor() * omega3(&self.params);
        o * o / (4.0 * self.params.delta_e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pair_shift_reference_point() {
        let v = pair_shift(6.0, &InteractionParams::control_register()).unwrap();
        assert!((v - 68.97).abs() < 0.01, "{v}");
    }

    #[test]
    fn pair_shift_floor() {
        let p = InteractionParams::control_register();
        assert!(matches!(pair_shift(0.01, &p), Err(Error::DistanceBelowFloor { .. })));
        assert!(pair_shift(0.05, &p).is_ok());
        assert!(pair_shift(1e6, &p).unwrap().abs() < 1e-20);
    }

    #[test]
    fn r_max_values() {
        assert!((r_max(&InteractionParams::control_register()) - 6.68).abs() < 0.01);
        assert!((r_max(&InteractionParams::register_register()) - 4.52).abs() < 0.01);
        let mut p = InteractionParams::control_register();
        let a = r_max(&p);
        p.c_dd *= 2.0;
        assert!((r_max(&p) / a - 2f64.cbrt()).abs() < 1e-12);
    }

    #[test]
    fn pulse_shape_points() {
        let p = PulseParams::default();
        assert_eq!(omega2(0.0, &p), 0.0);
        assert!(omega2(p.tau, &p).abs() < 1e-6 * p.omega2_peak());
        assert_eq!(omega2(p.tau / 2.0, &p), p.omega2_peak());
        assert_eq!(omega2(-1e-9, &p), 0.0);
        assert_eq!(omega2(p.tau * 1.01, &p), 0.0);
        let r = omega3(&p) / p.omega2_peak();
        assert!((r - 10.0 / 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn omega3_magnitudes() {
        let p = PulseParams::default();
        let o3 = omega3(&p);
        assert!((units::rad_to_mhz(o3) - 206.0).abs() < 0.5, "{}", units::rad_to_mhz(o3));
        let scale = o3 * o3 / (4.0 * p.delta_e);
        assert!((units::rad_to_mhz(scale) - 10.6).abs() < 0.05);
        let q = PulseParams { tau: 4.0 * p.tau, ..p };
        assert!((omega3(&q) / o3 - 0.5).abs() < 1e-14);
    }

    #[test]
    fn default_scale_is_root_two_pi() {
        assert!((DEFAULT_AMPLITUDE_SCALE - core::f64::consts::TAU.sqrt()).abs() < 1e-15);
    }
}
