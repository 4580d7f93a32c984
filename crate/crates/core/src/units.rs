//! Unit conversions. Interactions are handled in MHz and micrometres, the
//! engine runs in rad/s and seconds; every 2π lives here.

use core::f64::consts::{PI, TAU};

/// Reduced Planck constant (J s).
pub const HBAR: f64 = 1.054_571_817e-34;
/// Boltzmann constant (J/K).
pub const K_B: f64 = 1.380_649e-23;
/// Standard gravity (m/s^2).
pub const G_STANDARD: f64 = 9.806_65;
/// Mass of an 87Rb atom as quoted for the gravity scenario (kg).
pub const M_RB87: f64 = 1.45e-25;

/// Cyclic frequency in Hz to angular frequency in rad/s.
#[inline]
pub fn hz_to_rad(f_hz: f64) -> f64 {
    TAU * f_hz
}

/// Angular frequency in rad/s to cyclic Hz.
#[inline]
pub fn rad_to_hz(w: f64) -> f64 {
    w / TAU
}

/// Cyclic MHz to rad/s.
#[inline]
pub fn mhz_to_rad(f_mhz: f64) -> f64 {
    TAU * f_mhz * 1e6
}

/// rad/s to cyclic MHz.
#[inline]
pub fn rad_to_mhz(w: f64) -> f64 {
    w / (TAU * 1e6)
}

/// Cubic micrometres to cubic centimetres.
#[inline]
pub fn um3_to_cm3(v: f64) -> f64 {
    v * 1e-12
}

pub const UM_TO_M: f64 = 1e-6;

/// (2π)^{3/2}
pub const TWO_PI_3_2: f64 = 15.749_609_945_722_419;
/// 8 π^{3/2}
pub fn eight_pi_3_2() -> f64 {
    8.0 * PI * num_traits::Float::sqrt(PI)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trips() {
        assert!((rad_to_hz(hz_to_rad(5326.0)) - 5326.0).abs() < 1e-9);
        assert!((rad_to_mhz(mhz_to_rad(68.9)) - 68.9).abs() < 1e-12);
        assert!((TWO_PI_3_2 - TAU * TAU.sqrt()).abs() < 1e-12);
    }
}
