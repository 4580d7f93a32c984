use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng;

use super::{shot, ExperimentConfig, FringeDataset, FringePoint, GateContrastModel, Mode};
use crate::analytic::{default_poisson_truncation, poisson_average, register_weights};
use crate::error::{invalid, Result};
use crate::rng::{stream, tag};
use crate::trap::{no_loss_probability, poisson_load, two_body_loss_rate};
use crate::C64;

/// `sum_n w_n exp(i ((N - 2n) phi + theta))`.
fn fringe_sum(n_r: usize, p_r: f64, phase: f64, theta: f64) -> C64 {
    register_weights(n_r, p_r)
        .iter()
        .enumerate()
        .map(|(n, &w)| C64::from_polar(w, (n_r as f64 - 2.0 * n as f64) * phase + theta))
        .sum()
}

fn no_loss(cfg: &ExperimentConfig, n: usize) -> f64 {
    no_loss_probability(n, cfg.t, two_body_loss_rate(n, &cfg.trap.register, &cfg.trap.loss))
}

/// Exact `<sigma_Z>` averaged over loading, losses and gate phases.
fn expected_sigma_z(cfg: &ExperimentConfig, model: &GateContrastModel, phase: f64) -> Result<f64> {
    let chi = if cfg.large_n.gate_phases { model.characteristic() } else { C64::new(1.0, 0.0) };
    let p_r = cfg.noise.p_r;
    poisson_average(
        cfg.mean_n_r,
        |m| {
            let keep = if cfg.large_n.losses { no_loss(cfg, m) } else { 1.0 };
            let s = chi.powu(2 * m as u32) * fringe_sum(m, p_r, phase, 0.0);
            keep * model.contrast_at(m) * s.re
        },
        Some(default_poisson_truncation(cfg.mean_n_r)),
    )
}

/// Scan point `i` of the large-register model.
pub fn large_n_point(cfg: &ExperimentConfig, model: &GateContrastModel, i: usize) -> Result<FringePoint> {
    let x = *cfg.scan.get(i).ok_or_else(|| invalid("i", "outside the scan"))?;
    let phase = cfg.phase(x);
    if cfg.probabilities_only {
        let s = expected_sigma_z(cfg, model, phase)?;
        return Ok(FringePoint { delta_omega_over_omega0: x, sigma_z_mean: s, sigma_z_exact: s, n0: 0, n1: 0, losses: 0, leakage: 0.0 });
    }
    let thetas = model.thetas();
    let (mut n0, mut n1, mut lost, mut exact) = (0u32, 0u32, 0u32, 0.0);
    for j in 0..cfg.nu as u64 {
        let key = [i as u64, j];
        let n = poisson_load(cfg.mean_n_r, &mut stream(cfg.seed, &[tag::LOADING, key[0], key[1]]))?;
        if cfg.large_n.losses {
            let mut rng = stream(cfg.seed, &[tag::LOSS, key[0], key[1]]);
            if rng.gen::<f64>() >= no_loss(cfg, n) {
                lost += 1;
                continue;
            }
        }
        let mut theta = 0.0;
        if cfg.large_n.gate_phases && !thetas.is_empty() {
            let mut rng = stream(cfg.seed, &[tag::PHASES, key[0], key[1]]);
            theta = (0..2 * n).map(|_| thetas[rng.gen_range(0..thetas.len())]).sum();
        }
        let sigma = (model.contrast_at(n) * fringe_sum(n, cfg.noise.p_r, phase, theta).re).clamp(-1.0, 1.0);
        exact += sigma;
        if shot(0.5 * (1.0 + sigma), &mut stream(cfg.seed, &[tag::MEASURE, key[0], key[1]])) {
            n0 += 1;
        } else {
            n1 += 1;
        }
    }
    let nu = cfg.nu as f64;
    Ok(FringePoint {
        delta_omega_over_omega0: x,
        sigma_z_mean: (n0 as f64 - n1 as f64) / nu,
        sigma_z_exact: exact / nu,
        n0,
        n1,
        losses: lost,
        leakage: 0.0,
    })
}

/// Large-register fringe scan; losses count as their own outcome with
/// `sigma_Z = 0`.
pub fn run_large_n(cfg: &ExperimentConfig, model: &GateContrastModel) -> Result<FringeDataset> {
    cfg.validate()?;
    if cfg.mode != Mode::LargeNModel {
        return Err(invalid("mode", "expected large_n_model"));
    }
    let points = (0..cfg.scan.len()).map(|i| large_n_point(cfg, model, i)).collect::<Result<Vec<_>>>()?;
    Ok(FringeDataset { points, config: cfg.clone() })
}
