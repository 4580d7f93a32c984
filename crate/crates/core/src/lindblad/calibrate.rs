//! Pulse-area calibration of the Raman envelope and the EIT-blocking check.

#[allow(unused_imports)]
use num_traits::Float;

use super::density::DensityMatrix;
use super::hamiltonian::ShiftTable;
use super::integrate::{integrate, IntegrateOptions};
use super::{AtomLevelScheme, LEVEL_0, LEVEL_1};
use crate::error::{invalid, Result};
use crate::rydberg::PulseSchedule;

/// `|0> -> |1>` population after one pulse on a lone atom.
pub fn transfer(scheme: &AtomLevelScheme, pulses: &PulseSchedule) -> Result<f64> {
    let rho = DensityMatrix::basis_state(&[LEVEL_0])?;
    let (out, _) =
        integrate(&rho, scheme, pulses, &ShiftTable::zeros(1), (0.0, pulses.tau()), &IntegrateOptions::default())?;
    Ok(out.population(&[LEVEL_1]))
}

/// Transfer with the Rydberg coupling off, the blockade-lifted limit.
pub fn blockaded_transfer(scheme: &AtomLevelScheme, pulses: &PulseSchedule) -> Result<f64> {
    transfer(scheme, &PulseSchedule { omega3_on: false, ..*pulses })
}

/// Transfer with the Rydberg coupling on and no interaction partner.
pub fn eit_transfer(scheme: &AtomLevelScheme, pulses: &PulseSchedule) -> Result<f64> {
    transfer(scheme, &PulseSchedule { omega3_on: true, ..*pulses })
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct Calibration {
    pub amplitude_scale: f64,
    pub transfer: f64,
    pub eit_transfer: f64,
}

/// Golden-section search for the amplitude scale maximising the blockaded
/// transfer within `bracket`, which must hold a single maximum.
pub fn calibrate_amplitude(scheme: &AtomLevelScheme, pulses: &PulseSchedule, bracket: (f64, f64)) -> Result<Calibration> {
    let (mut a, mut b) = bracket;
    if !(a > 0.0 && b > a) || !b.is_finite() {
        return Err(invalid("bracket", "need 0 < lo < hi"));
    }
    let at = |s: f64| blockaded_transfer(scheme, &PulseSchedule { amplitude_scale: s, ..*pulses });
    let g = (5.0f64.sqrt() - 1.0) / 2.0;
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (at(c)?, at(d)?);
    while b - a > 1e-7 * b {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = at(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = at(d)?;
        }
    }
    let s = 0.5 * (a + b);
    let tuned = PulseSchedule { amplitude_scale: s, ..*pulses };
    Ok(Calibration { amplitude_scale: s, transfer: at(s)?, eit_transfer: eit_transfer(scheme, &tuned)? })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rydberg::DEFAULT_AMPLITUDE_SCALE;

    fn ideal() -> AtomLevelScheme {
        AtomLevelScheme { gamma_e: 0.0, gamma_dph: 0.0, ..AtomLevelScheme::default() }
    }

    #[test]
    fn default_scale_gives_a_pi_pulse() {
        let p = PulseSchedule::default();
        assert!(blockaded_transfer(&ideal(), &p).unwrap() >= 0.99);
    }

    #[test]
    fn eit_blocks_the_transfer() {
        let p = PulseSchedule::default();
        assert!(eit_transfer(&ideal(), &p).unwrap() <= 0.01);
    }

    #[test]
    fn calibration_finds_the_default() {
        let c = calibrate_amplitude(&ideal(), &PulseSchedule::default(), (1.5, 3.5)).unwrap();
        assert!(c.transfer >= 0.99, "{c:?}");
        assert!((c.amplitude_scale / DEFAULT_AMPLITUDE_SCALE - 1.0).abs() < 0.02, "{c:?}");
        assert!(c.eit_transfer <= 0.01, "{c:?}");
    }
}
