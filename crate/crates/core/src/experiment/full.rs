use alloc::vec::Vec;

use super::{draw_positions, gate_shifts, shot, ExperimentConfig, FringeDataset, FringePoint, Mode};
use crate::error::{invalid, Result};
use crate::lindblad::{BlockState, ControlledGate, FringeCoefficients, InvariantReport, SplitOptions};
use crate::rng::{stream, tag};

fn gate_for(cfg: &ExperimentConfig, rep: u64, which: u64, n_r: usize) -> Result<ControlledGate> {
    let pairs = cfg.gate.register_interactions;
    let mut rng = stream(cfg.seed, &[tag::POSITIONS, rep, which]);
    let (control, reg) = draw_positions(cfg, n_r, pairs, &mut rng)?;
    let (vc, table) = gate_shifts(cfg, &control, &reg, pairs)?;
    let g = ControlledGate::new(cfg.gate.scheme, cfg.gate.pulses, vc, table, SplitOptions { slices: cfg.gate.slices })?;
    Ok(if cfg.gate.control_decoherence { g } else { g.without_control_decoherence() })
}

/// One repetition of the full protocol: both gates at freshly drawn
/// positions, reduced to the fringe polynomial of the control readout.
pub fn full_repetition(cfg: &ExperimentConfig, rep: u64) -> Result<FringeCoefficients> {
    if cfg.mode != Mode::FullDynamics {
        return Err(invalid("mode", "expected full_dynamics"));
    }
    let n_r = cfg.mean_n_r as usize;
    let run = || -> Result<FringeCoefficients> {
        let g1 = gate_for(cfg, rep, 1, n_r)?;
        let g2 = gate_for(cfg, rep, 2, n_r)?;
        let mut state = BlockState::initial(n_r, cfg.noise.p_c, cfg.noise.p_r);
        g1.evolve(&mut state)?;
        let mut proj = BlockState::qubit_projector(n_r);
        g2.evolve_adjoint(&mut proj)?;
        if cfg.gate.scheme.gamma_ryd > 0.0 {
            let mut id = BlockState::identity(n_r);
            g2.evolve_adjoint(&mut id)?;
            FringeCoefficients::from_blocks(&state, &proj, Some(&id))
        } else {
            FringeCoefficients::from_blocks(&state, &proj, None)
        }
    };
    run().map_err(|e| e.within(alloc::format!("repetition {rep}")))
}

/// Schrodinger-picture run of one repetition at `phase`, returning the worst
/// trace, Hermiticity and positivity figures over the states after each gate.
pub fn repetition_invariants(cfg: &ExperimentConfig, rep: u64, phase: f64) -> Result<InvariantReport> {
    let n_r = cfg.mean_n_r as usize;
    let g1 = gate_for(cfg, rep, 1, n_r)?;
    let g2 = gate_for(cfg, rep, 2, n_r)?;
    let mut state = BlockState::initial(n_r, cfg.noise.p_c, cfg.noise.p_r);
    g1.evolve(&mut state)?;
    let mut report = state.invariant_report()?;
    state.apply_free_evolution(phase);
    g2.evolve(&mut state)?;
    report.merge(&state.invariant_report()?);
    Ok(report)
}

/// Fringe dataset from per-repetition polynomials, `reps[j]` belonging to
/// repetition `j`.
pub fn aggregate_full(cfg: &ExperimentConfig, reps: &[FringeCoefficients]) -> Result<FringeDataset> {
    if reps.len() != cfg.nu as usize {
        return Err(invalid("reps", "need one polynomial per repetition"));
    }
    let mut points = Vec::with_capacity(cfg.scan.len());
    for (i, &x) in cfg.scan.iter().enumerate() {
        let phase = cfg.phase(x);
        let (mut n0, mut n1, mut exact, mut leakage) = (0u32, 0u32, 0.0, 0.0);
        for (j, c) in reps.iter().enumerate() {
            let r = c.readout(phase, 1.0).map_err(|e| e.within(alloc::format!("repetition {j}, point {i}")))?;
            leakage += r.leakage;
            let p0 = r.probabilities().0;
            exact += 2.0 * p0 - 1.0;
            if !cfg.probabilities_only {
                let mut rng = stream(cfg.seed, &[tag::MEASURE, i as u64, j as u64]);
                if shot(p0, &mut rng) {
                    n0 += 1;
                } else {
                    n1 += 1;
                }
            }
        }
        exact /= reps.len() as f64;
        leakage /= reps.len() as f64;
        let sigma = if cfg.probabilities_only { exact } else { (n0 as f64 - n1 as f64) / cfg.nu as f64 };
        points.push(FringePoint { delta_omega_over_omega0: x, sigma_z_mean: sigma, sigma_z_exact: exact, n0, n1, losses: 0, leakage });
    }
    Ok(FringeDataset { points, config: cfg.clone() })
}

/// Full-dynamics fringe scan, repetitions evaluated in order.
pub fn run_full_protocol(cfg: &ExperimentConfig) -> Result<FringeDataset> {
    cfg.validate()?;
    if cfg.mode != Mode::FullDynamics {
        return Err(invalid("mode", "expected full_dynamics"));
    }
    let reps = (0..cfg.nu as u64).map(|j| full_repetition(cfg, j)).collect::<Result<Vec<_>>>()?;
    aggregate_full(cfg, &reps)
}
