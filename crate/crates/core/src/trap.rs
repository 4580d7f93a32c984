//! Trap geometry, position sampling, loading and loss statistics.
//!
//! Lengths are in micrometres, rates in 1/s.

use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng;
use rand_distr::{Distribution, Normal, Poisson};

use crate::error::{invalid, Result};
use crate::units;

pub type Position = [f64; 3];

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TrapGeometry {
    /// Gaussian standard deviations (x, y, z) in um.
    pub widths: [f64; 3],
    /// Trap centre in um.
    pub center: [f64; 3],
    /// uK
    pub temperature: f64,
    /// mK
    pub depth: f64,
    /// Beam waists (um), informational only.
    pub waists: [f64; 2],
}

impl TrapGeometry {
    /// Register ensemble trap at the origin.
    pub fn register() -> Self {
        Self {
            widths: [1.73, 1.58, 0.19],
            center: [0.0; 3],
            temperature: 100.0,
            depth: 1.0,
            waists: [1.2, 10.0],
        }
    }

    /// Single-atom control trap, 2 um from the register along y.
    pub fn control() -> Self {
        Self {
            widths: [0.30, 0.08, 0.08],
            center: [0.0, 2.0, 0.0],
            temperature: 100.0,
            depth: 1.0,
            waists: [1.0, 1.0],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.widths.iter().any(|&w| !(w > 0.0) || !w.is_finite()) {
            return Err(invalid("widths", "must be finite and > 0"));
        }
        if self.center.iter().any(|c| !c.is_finite()) {
            return Err(invalid("center", "must be finite"));
        }
        Ok(())
    }

    /// `s_x s_y s_z` in um^3.
    pub fn width_product(&self) -> f64 {
        self.widths.iter().product()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LossModel {
    /// Two-body loss constant (cm^3/s).
    pub beta: f64,
    /// Spontaneous Raman timescale (s).
    pub tau_sp: f64,
    /// Vacuum-limited lifetime (s).
    pub vacuum_lifetime: f64,
}

impl Default for LossModel {
    fn default() -> Self {
        Self { beta: 0.25e-12, tau_sp: 3.3, vacuum_lifetime: 60.0 }
    }
}

impl LossModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta >= 0.0) {
            return Err(invalid("beta", "must be >= 0"));
        }
        if !(self.tau_sp > 0.0) || !(self.vacuum_lifetime > 0.0) {
            return Err(invalid("tau_sp/vacuum_lifetime", "must be > 0"));
        }
        Ok(())
    }

    /// Per-atom single-body loss rate `1/tau_sp + 1/vacuum_lifetime`.
    pub fn single_atom_rate(&self) -> f64 {
        1.0 / self.tau_sp + 1.0 / self.vacuum_lifetime
    }
}

/// i.i.d. Gaussian positions around the trap centre.
pub fn sample_positions<R: Rng + ?Sized>(g: &TrapGeometry, n: usize, rng: &mut R) -> Vec<Position> {
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    (0..n)
        .map(|_| {
            let mut p = [0.0; 3];
            for a in 0..3 {
                p[a] = g.center[a] + g.widths[a] * normal.sample(rng);
            }
            p
        })
        .collect()
}

pub fn distance(a: &Position, b: &Position) -> f64 {
    let d = [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
    (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt()
}

/// `beta N (N-1) / (8 pi^{3/2} s_x s_y s_z)` as a positive rate.
pub fn two_body_loss_rate(n_r: usize, g: &TrapGeometry, m: &LossModel) -> f64 {
    if n_r < 2 {
        return 0.0;
    }
    let n = n_r as f64;
    let vol_cm3 = units::um3_to_cm3(g.width_product());
    m.beta * n * (n - 1.0) / (units::eight_pi_3_2() * vol_cm3)
}

/// `exp(-N t gamma_2)`.
pub fn no_loss_probability(n_r: usize, t: f64, gamma2: f64) -> f64 {
    (-(n_r as f64) * t * gamma2).exp()
}

/// Peak density `N / ((2 pi)^{3/2} s_x s_y s_z)` in cm^-3.
pub fn peak_density(n_r: usize, g: &TrapGeometry) -> f64 {
    n_r as f64 / (units::TWO_PI_3_2 * units::um3_to_cm3(g.width_product()))
}

pub fn poisson_load<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> Result<usize> {
    if !(mean >= 0.0) || !mean.is_finite() {
        return Err(invalid("mean", "must be finite and >= 0"));
    }
    if mean == 0.0 {
        return Ok(0);
    }
    let d = Poisson::new(mean).map_err(|_| invalid("mean", "rejected by Poisson sampler"))?;
    let x: f64 = d.sample(rng);
    Ok(x as usize)
}

/// Harmonic-approximation widths; labelled an estimate because the quoted trap
/// widths do not follow from it.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct WidthEstimate {
    pub radial_um: f64,
    pub axial_um: f64,
    pub approximate: bool,
}

/// `sigma_r = (w0/2) sqrt(kT/U0)`, `sigma_ax = (z_R/sqrt 2) sqrt(kT/U0)` with
/// `z_R = pi w0^2 / lambda`.
pub fn harmonic_width_estimate(waist_um: f64, depth_mk: f64, temperature_uk: f64, wavelength_nm: f64) -> Result<WidthEstimate> {
    if !(waist_um > 0.0 && depth_mk > 0.0 && temperature_uk >= 0.0 && wavelength_nm > 0.0) {
        return Err(invalid("harmonic_width_estimate", "inputs must be positive"));
    }
    let ratio = (temperature_uk * 1e-6 / (depth_mk * 1e-3)).sqrt();
    let z_r = core::f64::consts::PI * waist_um * waist_um / (wavelength_nm * 1e-3);
    Ok(WidthEstimate {
        radial_um: waist_um / 2.0 * ratio,
        axial_um: z_r / 2f64.sqrt() * ratio,
        approximate: true,
    })
}
