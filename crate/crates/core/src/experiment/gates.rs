use alloc::format;
use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;

use super::{draw_positions, gate_shifts, ExperimentConfig};
use crate::error::{Error, Result};
use nalgebra::{Matrix2, Vector2};

use crate::lindblad::{conditional_map, fit_pauli, ControlledGate, GateFit, SplitOptions};
use crate::rng::{stream, tag};
use crate::trap::{distance, Position};
use crate::C64;

const BANK_KEY: u64 = 1;
const CURVE_KEY: u64 = 2;

/// One sampled single-atom gate.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct GateRecord {
    pub control: Position,
    pub register: Position,
    pub distance_um: f64,
    /// rad/s
    pub shift: f64,
    pub fit: GateFit,
}

fn single_gate(cfg: &ExperimentConfig, control: &Position, reg: &Position) -> Result<(ControlledGate, f64)> {
    let (vc, _) = gate_shifts(cfg, control, core::slice::from_ref(reg), false)?;
    let g = ControlledGate::single(cfg.gate.scheme, cfg.gate.pulses, vc[0], SplitOptions { slices: cfg.gate.slices })?;
    Ok((g, vc[0]))
}

/// Gate record `index` of the bank: positions from their own stream, fitted
/// map kept even when the fit is poor.
pub fn gate_record(cfg: &ExperimentConfig, index: u64) -> Result<GateRecord> {
    let mut rng = stream(cfg.seed, &[tag::GATE_BANK, BANK_KEY, index]);
    let (control, reg) = draw_positions(cfg, 1, false, &mut rng)?;
    let (g, shift) = single_gate(cfg, &control, &reg[0])?;
    let fit = fit_pauli(&conditional_map(&g)?)?;
    Ok(GateRecord { control, register: reg[0], distance_um: distance(&control, &reg[0]), shift, fit })
}

pub fn gate_bank(cfg: &ExperimentConfig, size: usize) -> Result<Vec<GateRecord>> {
    (0..size as u64).map(|i| gate_record(cfg, i).map_err(|e| e.within(format!("gate record {i}")))).collect()
}

/// Control coherence `(-1)^N (rho_01 + rho_10)`-style amplitude, complex, at
/// free-evolution phase `pi` for `N = 1..=max_n` in one repetition; its real
/// part is `(-1)^N <sigma_Z>`.
///
/// `max_n` register atoms and a control are drawn for each of the two gates;
/// each atom's gate is the unitary fitted to its single-atom simulation and
/// the first `N` atoms form the register. Without register interactions the
/// control coherence factorises into `prod_k tr(U1_k^dag F^dag U2_k^dag F rho_k)`
/// with `F = diag(1, e^{-i phi})`.
pub fn contrast_repetition(cfg: &ExperimentConfig, max_n: usize, rep: u64) -> Result<Vec<C64>> {
    let run = || -> Result<Vec<C64>> {
        let mut gates = Vec::with_capacity(2);
        for which in 1..=2u64 {
            let mut rng = stream(cfg.seed, &[tag::GATE_BANK, CURVE_KEY, rep, which]);
            let (control, reg) = draw_positions(cfg, max_n, false, &mut rng)?;
            let fits = reg
                .iter()
                .map(|r| {
                    let (g, _) = single_gate(cfg, &control, r)?;
                    fit_pauli(&conditional_map(&g)?)
                })
                .collect::<Result<Vec<_>>>()?;
            gates.push(fits);
        }
        let f = Matrix2::from_diagonal(&Vector2::new(C64::new(1.0, 0.0), C64::new(-1.0, 0.0)));
        let pr = cfg.noise.p_r;
        let rho = Matrix2::from_diagonal(&Vector2::new(C64::new(0.5 * (1.0 + pr), 0.0), C64::new(0.5 * (1.0 - pr), 0.0)));
        let mut coherence = C64::new(cfg.noise.p_c, 0.0);
        let mut out = Vec::with_capacity(max_n);
        for k in 0..max_n {
            let u1 = pauli_matrix(&gates[0][k]);
            let u2 = pauli_matrix(&gates[1][k]);
            coherence *= (u1.adjoint() * f.adjoint() * u2.adjoint() * f * rho).trace();
            let sign = if (k + 1) % 2 == 0 { 1.0 } else { -1.0 };
            out.push(coherence * sign);
        }
        Ok(out)
    };
    run().map_err(|e| e.within(format!("contrast repetition {rep}")))
}

/// `a X + b Y + c Z`.
pub fn pauli_matrix(fit: &GateFit) -> Matrix2<C64> {
    let i = C64::new(0.0, 1.0);
    Matrix2::new(fit.c, fit.a - i * fit.b, fit.a + i * fit.b, -fit.c)
}

/// Least-squares line through `ln C(N)`: `C(N) = amplitude exp(-rate N)`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ExponentialFit {
    pub amplitude: f64,
    pub rate: f64,
}

impl ExponentialFit {
    pub fn at(&self, n: f64) -> f64 {
        self.amplitude * (-self.rate * n).exp()
    }
}

pub fn fit_exponential(points: &[(usize, f64)]) -> Result<ExponentialFit> {
    if points.len() < 2 {
        return Err(Error::NotEnoughPoints { need: 2, have: points.len() });
    }
    if let Some(&(n, c)) = points.iter().find(|p| !(p.1 > 0.0)) {
        return Err(Error::Config(format!("contrast {c} at N = {n} is not positive; raw points {points:?}")));
    }
    let m = points.len() as f64;
    let mx = points.iter().map(|p| p.0 as f64).sum::<f64>() / m;
    let my = points.iter().map(|p| p.1.ln()).sum::<f64>() / m;
    let sxx = points.iter().map(|p| (p.0 as f64 - mx).powi(2)).sum::<f64>();
    let sxy = points.iter().map(|p| (p.0 as f64 - mx) * (p.1.ln() - my)).sum::<f64>();
    if sxx == 0.0 {
        return Err(Error::Config(format!("all points share one register size; raw points {points:?}")));
    }
    let slope = sxy / sxx;
    Ok(ExponentialFit { amplitude: (my - slope * mx).exp(), rate: -slope })
}

/// Gate-limited contrast versus register size, with the phase bank used by
/// the large-register model.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct GateContrastModel {
    /// `(N, C(N))`: magnitude of the repetition-averaged coherence.
    pub points: Vec<(usize, f64)>,
    /// `(N, phase)`: its argument, the coherent fringe shift.
    pub phases: Vec<(usize, f64)>,
    pub fit: ExponentialFit,
    pub records: Vec<GateRecord>,
}

impl GateContrastModel {
    /// Gates that only lose the control purity `p_c`.
    pub fn perfect(p_c: f64) -> Self {
        Self {
            points: Vec::new(),
            phases: Vec::new(),
            fit: ExponentialFit { amplitude: p_c, rate: 0.0 },
            records: Vec::new(),
        }
    }

    pub fn contrast_at(&self, n: usize) -> f64 {
        self.fit.at(n as f64).min(1.0)
    }

    pub fn thetas(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.fit.theta).collect()
    }

    /// `mean exp(i theta)` over the bank; 1 with no records.
    pub fn characteristic(&self) -> C64 {
        if self.records.is_empty() {
            return C64::new(1.0, 0.0);
        }
        let s: C64 = self.records.iter().map(|r| C64::from_polar(1.0, r.fit.theta)).sum();
        s / self.records.len() as f64
    }
}

/// Average per-repetition coherences and fit the magnitudes.
pub fn aggregate_contrast(reps: &[Vec<C64>], records: Vec<GateRecord>) -> Result<GateContrastModel> {
    let max_n = reps.first().map_or(0, |r| r.len());
    if reps.is_empty() || reps.iter().any(|r| r.len() != max_n) {
        return Err(Error::NotEnoughPoints { need: 1, have: reps.len() });
    }
    let mean: Vec<C64> = (0..max_n).map(|k| reps.iter().map(|r| r[k]).sum::<C64>() / reps.len() as f64).collect();
    let points: Vec<(usize, f64)> = mean.iter().enumerate().map(|(k, c)| (k + 1, c.norm())).collect();
    let phases = mean.iter().enumerate().map(|(k, c)| (k + 1, c.arg())).collect();
    let fit = fit_exponential(&points)?;
    Ok(GateContrastModel { points, phases, fit, records })
}

/// Gate contrast curve from `cfg.nu` repetitions and the phase bank.
pub fn gate_contrast_curve(cfg: &ExperimentConfig) -> Result<GateContrastModel> {
    let max_n = cfg.large_n.contrast_max_n;
    let reps = (0..cfg.nu as u64).map(|j| contrast_repetition(cfg, max_n, j)).collect::<Result<Vec<_>>>()?;
    let records = gate_bank(cfg, cfg.large_n.bank_size)?;
    aggregate_contrast(&reps, records)
}
