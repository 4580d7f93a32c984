//! Conditional single-qubit map of a one-register-atom gate.

use nalgebra::{DMatrix, Matrix2};
#[allow(unused_imports)]
use num_traits::Float;

use super::gate::{ControlledGate, GateChannel};
use super::{LEVEL_0, LEVEL_1};
use crate::error::{invalid, Error, Result};
use crate::C64;

pub const POOR_FIT_THRESHOLD: f64 = 0.05;

/// Fit `U = a X + b Y + c Z` of the register map conditioned on the control
/// being excited, referenced to the unexcited branch.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct GateFit {
    pub a: C64,
    pub b: C64,
    pub c: C64,
    /// Phase with `a - i b = |a - i b| exp(-i theta)`.
    pub theta: f64,
    /// Relative weight of the identity component the model cannot express.
    pub residual: f64,
    /// Frobenius norm of the conditional map over `sqrt 2`; 1 for a unitary
    /// branch difference, smaller when decoherence shrinks it.
    pub magnitude: f64,
}

impl GateFit {
    pub fn abs_a_minus_ib(&self) -> f64 {
        (self.a - C64::new(0.0, 1.0) * self.b).norm()
    }

    pub fn is_poor(&self) -> bool {
        self.residual > POOR_FIT_THRESHOLD
    }
}

/// Conditional map `K = Phi_0x(I)^dagger` on the qubit subspace, sign-flipped
/// so the ideal blockaded Raman pulse (which gives `-X`) reads as `X`.
pub fn conditional_map(gate: &ControlledGate) -> Result<Matrix2<C64>> {
    if gate.n_r() != 1 {
        return Err(invalid("gate", "conditional map needs exactly one register atom"));
    }
    let mut m = DMatrix::<C64>::zeros(4, 4);
    m[(LEVEL_0, LEVEL_0)] = C64::new(1.0, 0.0);
    m[(LEVEL_1, LEVEL_1)] = C64::new(1.0, 0.0);
    gate.evolve_block(&mut m, GateChannel::ZERO_RYD, false)?;
    let k = Matrix2::new(m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)]).adjoint();
    Ok(-k)
}

/// Least-squares projection of [`conditional_map`] onto `span{X, Y, Z}`,
/// normalised to `|a|^2 + |b|^2 + |c|^2 = 1`.
pub fn extract_gate_unitary(gate: &ControlledGate) -> Result<GateFit> {
    let fit = fit_pauli(&conditional_map(gate)?)?;
    if fit.is_poor() {
        return Err(Error::PoorFit { residual: fit.residual, threshold: POOR_FIT_THRESHOLD });
    }
    Ok(fit)
}

/// Fit without the residual check.
pub fn fit_pauli(k: &Matrix2<C64>) -> Result<GateFit> {
    let half = C64::new(0.5, 0.0);
    let i = C64::new(0.0, 1.0);
    let ki = (k[(0, 0)] + k[(1, 1)]) * half;
    let kx = (k[(0, 1)] + k[(1, 0)]) * half;
    // tr(Y K) / 2 with Y = [[0, -i], [i, 0]]
    let ky = (k[(1, 0)] * (-i) + k[(0, 1)] * i) * half;
    let kz = (k[(0, 0)] - k[(1, 1)]) * half;
    let norm = (kx.norm_sqr() + ky.norm_sqr() + kz.norm_sqr()).sqrt();
    let total = (norm * norm + ki.norm_sqr()).sqrt();
    if total == 0.0 || norm == 0.0 {
        return Ok(GateFit {
            a: C64::new(0.0, 0.0),
            b: C64::new(0.0, 0.0),
            c: C64::new(0.0, 0.0),
            theta: 0.0,
            residual: 1.0,
            magnitude: total,
        });
    }
    let (a, b, c) = (kx / norm, ky / norm, kz / norm);
    let amb = a - i * b;
    Ok(GateFit { a, b, c, theta: -amb.arg(), residual: ki.norm() / total, magnitude: total })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pauli_projection_recovers_coefficients() {
        let i = C64::new(0.0, 1.0);
        let a = C64::from_polar(0.8, 0.3);
        let b = C64::new(0.1, 0.2);
        let c = C64::new(0.0, 0.0) + (1.0 - a.norm_sqr() - b.norm_sqr()).sqrt();
        // a X + b Y + c Z
        let k = Matrix2::new(c, a - i * b, a + i * b, -c);
        let f = fit_pauli(&k).unwrap();
        assert!((f.a - a).norm() < 1e-14);
        assert!((f.b - b).norm() < 1e-14);
        assert!((f.c - c).norm() < 1e-14);
        assert!(f.residual < 1e-14);
        assert!((f.theta + (a - i * b).arg()).abs() < 1e-14);
    }

    #[test]
    fn identity_is_a_poor_fit() {
        let f = fit_pauli(&Matrix2::identity()).unwrap();
        assert_eq!(f.residual, 1.0);
    }
}
