//! Adaptive Dormand-Prince 5(4) integration of the dense master equation.

use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;

use super::density::DensityMatrix;
use super::hamiltonian::{hamiltonian_parts, rhs_sparse, Dissipator, GateSetup, ShiftTable};
use super::{AtomLevelScheme, InvariantReport, InvariantTolerances};
use crate::error::{invalid, Error, Result};
use crate::rydberg::PulseSchedule;
use crate::C64;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegrateOptions {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
    /// Initial step; `None` picks a fraction of the fastest frequency.
    pub h0: Option<f64>,
    pub tolerances: InvariantTolerances,
    /// Skip the invariant check on the output (used by the Rydberg-sink runs,
    /// which do not conserve trace).
    pub check: bool,
}

impl Default for IntegrateOptions {
    fn default() -> Self {
        Self {
            rtol: 1e-8,
            atol: 1e-9,
            max_steps: 2_000_000,
            h0: None,
            tolerances: InvariantTolerances::default(),
            check: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct IntegrateStats {
    pub accepted: usize,
    pub rejected: usize,
    pub rhs_evals: usize,
    pub report: InvariantReport,
}

// Dormand-Prince tableau.
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
// b - b*, the embedded error weights.
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

/// Generic DP5(4) driver over complex vectors, FSAL.
pub(crate) fn dopri5<F>(mut f: F, t0: f64, t1: f64, y0: &[C64], opts: &IntegrateOptions, h_init: f64) -> Result<(Vec<C64>, IntegrateStats)>
where
    F: FnMut(f64, &[C64], &mut [C64]),
{
    let n = y0.len();
    let mut y = y0.to_vec();
    let mut stats = IntegrateStats::default();
    if t1 == t0 {
        return Ok((y, stats));
    }
    if !(t1 > t0) {
        return Err(invalid("t_span", "end must not precede start"));
    }
    let zero = C64::new(0.0, 0.0);
    let mut k: [Vec<C64>; 7] = core::array::from_fn(|_| vec![zero; n]);
    let mut tmp = vec![zero; n];
    let mut ynew = vec![zero; n];
    f(t0, &y, &mut k[0]);
    stats.rhs_evals += 1;

    let mut t = t0;
    let mut h = h_init.min(t1 - t0);
    let span = t1 - t0;
    while t < t1 {
        if stats.accepted + stats.rejected >= opts.max_steps {
            return Err(Error::StepBudgetExhausted { t, max_steps: opts.max_steps });
        }
        if h < 1e-13 * span.max(t.abs()) {
            return Err(Error::StepSizeUnderflow { t, h });
        }
        let last = t + h >= t1;
        if last {
            h = t1 - t;
        }
        macro_rules! stage {
            ($dst:expr, $c:expr, [$(($a:expr, $i:expr)),*]) => {{
                for j in 0..n {
                    let mut acc = y[j];
                    $( acc += k[$i][j] * ($a * h); )*
                    tmp[j] = acc;
                }
                f(t + $c * h, &tmp, &mut k[$dst]);
            }};
        }
        stage!(1, C2, [(A21, 0)]);
        stage!(2, C3, [(A31, 0), (A32, 1)]);
        stage!(3, C4, [(A41, 0), (A42, 1), (A43, 2)]);
        stage!(4, C5, [(A51, 0), (A52, 1), (A53, 2), (A54, 3)]);
        stage!(5, 1.0, [(A61, 0), (A62, 1), (A63, 2), (A64, 3), (A65, 4)]);
        for j in 0..n {
            ynew[j] = y[j] + (k[0][j] * B1 + k[2][j] * B3 + k[3][j] * B4 + k[4][j] * B5 + k[5][j] * B6) * h;
        }
        f(t + h, &ynew, &mut k[6]);
        stats.rhs_evals += 6;

        let mut err: f64 = 0.0;
        for j in 0..n {
            let e = (k[0][j] * E1 + k[2][j] * E3 + k[3][j] * E4 + k[4][j] * E5 + k[5][j] * E6 + k[6][j] * E7) * h;
            let sc = opts.atol + opts.rtol * y[j].norm().max(ynew[j].norm());
            err = err.max(e.norm() / sc);
        }
        if err <= 1.0 {
            t = if last { t1 } else { t + h };
            core::mem::swap(&mut y, &mut ynew);
            k.swap(0, 6);
            stats.accepted += 1;
            let fac = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
            h *= fac;
        } else {
            stats.rejected += 1;
            h *= (0.9 * err.powf(-0.2)).clamp(0.1, 0.9);
        }
    }
    Ok((y, stats))
}

/// Evolve `rho0` through `t_span` under the gate described by `setup`.
pub fn integrate_setup(
    rho0: &DensityMatrix,
    setup: &GateSetup,
    t_span: (f64, f64),
    opts: &IntegrateOptions,
) -> Result<(DensityMatrix, IntegrateStats)> {
    if rho0.n_atoms() != setup.n_atoms() {
        return Err(Error::DimensionMismatch { expected: setup.n_atoms(), found: rho0.n_atoms() });
    }
    let parts = hamiltonian_parts(setup)?;
    let diss = Dissipator::new(&setup.scheme, setup.n_atoms());
    let pulses = setup.pulses;
    let fastest = setup.scheme.delta_e
        + pulses.params.omega2_peak() * pulses.amplitude_scale
        + pulses.omega3()
        + (0..setup.n_atoms())
            .flat_map(|i| (0..i).map(move |j| (i, j)))
            .map(|(i, j)| setup.shifts.get(i, j).abs())
            .sum::<f64>();
    let h0 = opts.h0.unwrap_or(0.05 / fastest.max(1.0));
    let (y, mut stats) = dopri5(
        |t, y, dy| rhs_sparse(&parts, pulses.omega2(t), &diss, y, dy),
        t_span.0,
        t_span.1,
        rho0.matrix().as_slice(),
        opts,
        h0,
    )?;
    let d = rho0.dim();
    let out = DensityMatrix::from_matrix(rho0.n_atoms(), nalgebra::DMatrix::from_vec(d, d, y))?;
    stats.report = out.invariant_report();
    if opts.check {
        stats.report.check(&opts.tolerances)?;
    }
    Ok((out, stats))
}

/// Every atom driven; see [`integrate_setup`] for masked drives.
pub fn integrate(
    rho0: &DensityMatrix,
    scheme: &AtomLevelScheme,
    pulses: &PulseSchedule,
    shifts: &ShiftTable,
    t_span: (f64, f64),
    opts: &IntegrateOptions,
) -> Result<(DensityMatrix, IntegrateStats)> {
    let setup = GateSetup::all_driven(*scheme, *pulses, shifts.clone());
    integrate_setup(rho0, &setup, t_span, opts)
}
