//! Split-step propagator for the controlled gate.
//!
//! The control (atom 0) is not driven during the gate and only occupies
//! `|0>` or `|x>`. The state therefore splits into register operators
//! `rho_cc'` for `c, c'` in `{0, x}`, each evolving as
//! `U_c rho U_c'^dagger` plus local dissipation. In the per-atom basis
//! `D = (|0> - |1>)/sqrt 2`, `B = (|0> + |1>)/sqrt 2` the level `D` is dark,
//! so the register Hamiltonian is block diagonal in the set of atoms sitting
//! in `D`. Each slice propagates every block exactly under the midpoint
//! Hamiltonian, including decay out of `|e>` and `|x>` and the repopulation
//! of the qubit levels it feeds; dephasing is applied per atom in a Strang
//! splitting.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::FRAC_1_SQRT_2;
use nalgebra::{DMatrix, SymmetricEigen};
#[allow(unused_imports)]
use num_traits::Float;

use super::eigen;
use super::density::{digit, dim_for, in_qubit_subspace, with_digit, DensityMatrix, ReducedControl};
use super::hamiltonian::{atom_rate, ShiftTable};
use super::{AtomLevelScheme, InvariantReport, LEVEL_0, LEVEL_1, LEVEL_E, LEVEL_X, MAX_ATOMS};
use crate::error::{invalid, Error, Result};
use crate::rydberg::PulseSchedule;
use crate::C64;

// In the rotated basis slots 0 and 1 hold D and B.
const SLOT_D: usize = 0;
const SLOT_B: usize = 1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitOptions {
    pub slices: usize,
}

impl Default for SplitOptions {
    fn default() -> Self {
        Self { slices: 400 }
    }
}

/// Which register block is propagated: control `(c, c')` with `true` for `|x>`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GateChannel {
    pub left_rydberg: bool,
    pub right_rydberg: bool,
}

impl GateChannel {
    pub const ZERO_ZERO: Self = Self { left_rydberg: false, right_rydberg: false };
    pub const RYD_RYD: Self = Self { left_rydberg: true, right_rydberg: true };
    pub const ZERO_RYD: Self = Self { left_rydberg: false, right_rydberg: true };

    fn control_levels(&self) -> (usize, usize) {
        let l = |r: bool| if r { LEVEL_X } else { LEVEL_0 };
        (l(self.left_rydberg), l(self.right_rydberg))
    }
}

/// The three independent register blocks of a control-register state with the
/// control in `{|0>, |x>}`; `rho_x0 = rho_0x^dagger`.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockState {
    pub n_r: usize,
    pub zz: DMatrix<C64>,
    pub rr: DMatrix<C64>,
    pub zr: DMatrix<C64>,
}

fn register_product(n_r: usize, p_r: f64) -> DMatrix<C64> {
    let d = dim_for(n_r);
    let mut m = DMatrix::zeros(d, d);
    let a = (1.0 + p_r) / 2.0;
    let b = (1.0 - p_r) / 2.0;
    for s in 0..d {
        if !in_qubit_subspace(s, n_r) {
            continue;
        }
        let ones = (0..n_r).filter(|&k| digit(s, k, n_r) == LEVEL_1).count();
        m[(s, s)] = C64::new(a.powi((n_r - ones) as i32) * b.powi(ones as i32), 0.0);
    }
    m
}

impl BlockState {
    /// Control and register purities after the Hadamard and the `|1> -> |x>`
    /// map on the control.
    pub fn initial(n_r: usize, p_c: f64, p_r: f64) -> Self {
        let r = register_product(n_r, p_r);
        Self { n_r, zz: &r * C64::new(0.5, 0.0), rr: &r * C64::new(0.5, 0.0), zr: &r * C64::new(0.5 * p_c, 0.0) }
    }

    /// Qubit-subspace projector in every block; the starting point of the
    /// adjoint readout.
    pub fn qubit_projector(n_r: usize) -> Self {
        let d = dim_for(n_r);
        let mut m = DMatrix::zeros(d, d);
        for s in 0..d {
            if in_qubit_subspace(s, n_r) {
                m[(s, s)] = C64::new(1.0, 0.0);
            }
        }
        Self { n_r, zz: m.clone(), rr: m.clone(), zr: m }
    }

    /// Blocks of a full state whose control is in `{|0>, |x>}`.
    pub fn from_density(rho: &DensityMatrix) -> Result<Self> {
        let n_r = rho.n_atoms() - 1;
        let d = dim_for(n_r);
        let block = |c: usize, c2: usize| rho.matrix().view((c * d, c2 * d), (d, d)).into_owned();
        let stray: f64 = (0..rho.dim()).filter(|&i| i / d == LEVEL_1 || i / d == LEVEL_E).map(|i| rho.get(i, i).re).sum();
        if stray > 1e-12 {
            return Err(invalid("rho", "control must be confined to |0> and |x>"));
        }
        Ok(Self { n_r, zz: block(LEVEL_0, LEVEL_0), rr: block(LEVEL_X, LEVEL_X), zr: block(LEVEL_0, LEVEL_X) })
    }

    pub fn to_density(&self) -> Result<DensityMatrix> {
        let d = dim_for(self.n_r);
        let mut m = DMatrix::zeros(4 * d, 4 * d);
        m.view_mut((0, 0), (d, d)).copy_from(&self.zz);
        m.view_mut((LEVEL_X * d, LEVEL_X * d), (d, d)).copy_from(&self.rr);
        m.view_mut((0, LEVEL_X * d), (d, d)).copy_from(&self.zr);
        m.view_mut((LEVEL_X * d, 0), (d, d)).copy_from(&self.zr.adjoint());
        DensityMatrix::from_matrix(self.n_r + 1, m)
    }

    /// `exp(-i phase)` on `|1>` of each register atom.
    pub fn apply_free_evolution(&mut self, phase: f64) {
        let n = self.n_r;
        let d = dim_for(n);
        let ph: Vec<C64> = (0..d)
            .map(|s| {
                let ones = (0..n).filter(|&k| digit(s, k, n) == LEVEL_1).count() as f64;
                C64::from_polar(1.0, -phase * ones)
            })
            .collect();
        for m in [&mut self.zz, &mut self.rr, &mut self.zr] {
            for b in 0..d {
                for a in 0..d {
                    m[(a, b)] *= ph[a] * ph[b].conj();
                }
            }
        }
    }

    /// Map `|x>` back to `|1>`, apply the Hadamard and trace out the register
    /// over its qubit subspace.
    pub fn readout(&self, leakage_threshold: f64) -> Result<ReducedControl> {
        let n = self.n_r;
        let d = dim_for(n);
        let mut tz = C64::new(0.0, 0.0);
        let mut tr = C64::new(0.0, 0.0);
        let mut tzr = C64::new(0.0, 0.0);
        let mut total = C64::new(0.0, 0.0);
        for s in 0..d {
            total += self.zz[(s, s)] + self.rr[(s, s)];
            if in_qubit_subspace(s, n) {
                tz += self.zz[(s, s)];
                tr += self.rr[(s, s)];
                tzr += self.zr[(s, s)];
            }
        }
        let kept = (tz + tr).re;
        reduced_from_traces(tz.re, tr.re, tzr, kept, total.re, leakage_threshold)
    }

    pub fn invariant_report(&self) -> Result<InvariantReport> {
        Ok(self.to_density()?.invariant_report())
    }
}

impl BlockState {
    /// Identity in every block; its adjoint image gives the retained trace
    /// when the gate loses population.
    pub fn identity(n_r: usize) -> Self {
        let d = dim_for(n_r);
        let m = DMatrix::identity(d, d);
        Self { n_r, zz: m.clone(), rr: m.clone(), zr: m }
    }

    /// Register product state in every block, with no control weights; the
    /// per-atom input of [`FringeCoefficients::product`].
    pub fn register_only(n_r: usize, p_r: f64) -> Self {
        let r = register_product(n_r, p_r);
        Self { n_r, zz: r.clone(), rr: r.clone(), zr: r }
    }
}

fn ones(s: usize, n: usize) -> isize {
    (0..n).filter(|&k| digit(s, k, n) == LEVEL_1).count() as isize
}

/// Readout of a gate pair as a trigonometric polynomial in the free-evolution
/// phase.
///
/// With `B` the blocks after the first gate and `X` the adjoint image of an
/// observable under the second, the free evolution multiplies `B_ab` by
/// `exp(-i phi d_ab)` with `d_ab` the difference in `|1>` counts, so every
/// block trace is `sum_d c_d exp(-i phi d)` with `c_d = sum conj(X_ab) B_ab`.
#[derive(Debug, Clone, PartialEq)]
pub struct FringeCoefficients {
    pub n_r: usize,
    /// Qubit-subspace traces of the `zz`, `rr` and `zr` blocks.
    pub kept: [Vec<C64>; 3],
    /// Full traces of the `zz` and `rr` blocks.
    pub total: [Vec<C64>; 2],
}

impl FringeCoefficients {
    fn pair(b: &DMatrix<C64>, x: &DMatrix<C64>, n: usize) -> Vec<C64> {
        let mut c = vec![C64::new(0.0, 0.0); 2 * n + 1];
        let d = b.nrows();
        for j in 0..d {
            let oj = ones(j, n);
            for i in 0..d {
                let v = b[(i, j)];
                if v == C64::new(0.0, 0.0) {
                    continue;
                }
                c[(ones(i, n) - oj + n as isize) as usize] += x[(i, j)].conj() * v;
            }
        }
        c
    }

    /// `state`: blocks after the first gate. `projector`: the qubit projector
    /// after the adjoint second gate. `identity`: the identity after the
    /// adjoint second gate; when `None` the gate is taken as trace preserving.
    pub fn from_blocks(state: &BlockState, projector: &BlockState, identity: Option<&BlockState>) -> Result<Self> {
        let n = state.n_r;
        if projector.n_r != n || identity.is_some_and(|i| i.n_r != n) {
            return Err(Error::DimensionMismatch { expected: n, found: projector.n_r });
        }
        let kept = [
            Self::pair(&state.zz, &projector.zz, n),
            Self::pair(&state.rr, &projector.rr, n),
            Self::pair(&state.zr, &projector.zr, n),
        ];
        let total = match identity {
            Some(id) => [Self::pair(&state.zz, &id.zz, n), Self::pair(&state.rr, &id.rr, n)],
            None => {
                let mut t = [vec![C64::new(0.0, 0.0); 2 * n + 1], vec![C64::new(0.0, 0.0); 2 * n + 1]];
                t[0][n] = state.zz.trace();
                t[1][n] = state.rr.trace();
                t
            }
        };
        Ok(Self { n_r: n, kept, total })
    }

    /// Register atoms without mutual interaction: multiply per-atom
    /// polynomials and apply block-wide `factors` for `(zz, rr, zr)` once.
    pub fn product(parts: &[Self], factors: [f64; 3]) -> Self {
        let conv = |a: &[C64], b: &[C64]| {
            let mut out = vec![C64::new(0.0, 0.0); a.len() + b.len() - 1];
            for (i, &x) in a.iter().enumerate() {
                for (j, &y) in b.iter().enumerate() {
                    out[i + j] += x * y;
                }
            }
            out
        };
        let one = vec![C64::new(1.0, 0.0)];
        let mut kept = [one.clone(), one.clone(), one.clone()];
        let mut total = [one.clone(), one];
        for p in parts {
            for (k, acc) in kept.iter_mut().enumerate() {
                *acc = conv(acc, &p.kept[k]);
            }
            for (k, acc) in total.iter_mut().enumerate() {
                *acc = conv(acc, &p.total[k]);
            }
        }
        for (k, acc) in kept.iter_mut().enumerate() {
            acc.iter_mut().for_each(|c| *c *= factors[k]);
        }
        for (k, acc) in total.iter_mut().enumerate() {
            acc.iter_mut().for_each(|c| *c *= factors[k]);
        }
        Self { n_r: parts.iter().map(|p| p.n_r).sum(), kept, total }
    }

    fn eval(c: &[C64], n: usize, phase: f64) -> C64 {
        c.iter().enumerate().map(|(i, &v)| v * C64::from_polar(1.0, -phase * (i as f64 - n as f64))).sum()
    }

    /// Reduced control state for free-evolution phase `phase`.
    pub fn readout(&self, phase: f64, leakage_threshold: f64) -> Result<ReducedControl> {
        let n = self.n_r;
        let tz = Self::eval(&self.kept[0], n, phase).re;
        let tr = Self::eval(&self.kept[1], n, phase).re;
        let tzr = Self::eval(&self.kept[2], n, phase);
        let total = Self::eval(&self.total[0], n, phase).re + Self::eval(&self.total[1], n, phase).re;
        reduced_from_traces(tz, tr, tzr, tz + tr, total, leakage_threshold)
    }
}

/// Control state after the final Hadamard given the block traces.
pub(crate) fn reduced_from_traces(
    tz: f64,
    tr: f64,
    tzr: C64,
    kept: f64,
    total: f64,
    leakage_threshold: f64,
) -> Result<ReducedControl> {
    let leakage = if total > 0.0 { ((total - kept) / total).max(0.0) } else { 1.0 };
    if leakage > leakage_threshold || kept <= 0.0 {
        return Err(Error::Leakage { leakage, threshold: leakage_threshold });
    }
    // H [[tz, tzr], [tzr*, tr]] H / kept
    let h = 0.5 / kept;
    let p00 = (tz + tr + 2.0 * tzr.re) * h;
    let p11 = (tz + tr - 2.0 * tzr.re) * h;
    let p01 = C64::new(tz - tr, -2.0 * tzr.im) * h;
    let rho = nalgebra::Matrix2::new(C64::new(p00, 0.0), p01, p01.conj(), C64::new(p11, 0.0));
    Ok(ReducedControl { rho, leakage })
}

/// Controlled gate on an undriven control and `n_r` driven register atoms.
#[derive(Debug, Clone)]
pub struct ControlledGate {
    n_r: usize,
    scheme: AtomLevelScheme,
    pulses: PulseSchedule,
    control_shifts: Vec<f64>,
    reg_shifts: ShiftTable,
    slices: usize,
    blocks: Vec<Vec<usize>>,
    control_decoherence: bool,
}

impl ControlledGate {
    /// `control_shifts[k]` is `V` between the control and register atom `k`
    /// (rad/s); `reg_shifts` holds the register pairs.
    pub fn new(
        scheme: AtomLevelScheme,
        pulses: PulseSchedule,
        control_shifts: Vec<f64>,
        reg_shifts: ShiftTable,
        opts: SplitOptions,
    ) -> Result<Self> {
        let n_r = control_shifts.len();
        if n_r == 0 {
            return Err(invalid("n_r", "need at least one register atom"));
        }
        if n_r + 1 > MAX_ATOMS {
            return Err(Error::DimensionOverflow { n_atoms: n_r + 1, max: MAX_ATOMS });
        }
        if reg_shifts.n() != n_r {
            return Err(Error::DimensionMismatch { expected: n_r, found: reg_shifts.n() });
        }
        if opts.slices == 0 {
            return Err(invalid("slices", "must be >= 1"));
        }
        if control_shifts.iter().any(|v| !v.is_finite()) {
            return Err(invalid("control_shifts", "must be finite"));
        }
        scheme.validate()?;
        pulses.params.validate()?;
        reg_shifts.validate()?;
        Ok(Self {
            n_r,
            scheme,
            pulses,
            control_shifts,
            reg_shifts,
            slices: opts.slices,
            blocks: dark_blocks(n_r),
            control_decoherence: true,
        })
    }

    /// Gate for a single register atom (the characterisation case).
    pub fn single(scheme: AtomLevelScheme, pulses: PulseSchedule, v_control: f64, opts: SplitOptions) -> Result<Self> {
        Self::new(scheme, pulses, vec![v_control], ShiftTable::zeros(1), opts)
    }

    pub fn n_r(&self) -> usize {
        self.n_r
    }

    /// Drop the control's own dephasing and decay from the propagation, for
    /// per-atom gates that are later combined with
    /// [`FringeCoefficients::product`].
    pub fn without_control_decoherence(mut self) -> Self {
        self.control_decoherence = false;
        self
    }

    /// Factor the control's dephasing and decay put on block `ch` over one gate.
    pub fn control_factor(&self, ch: GateChannel) -> f64 {
        let (cl, cr) = ch.control_levels();
        (-atom_rate(&self.scheme, cl, cr) * self.pulses.tau()).exp()
    }

    /// Full shift table with the control as atom 0, for the dense engine.
    pub fn full_shift_table(&self) -> ShiftTable {
        let n = self.n_r + 1;
        let mut t = ShiftTable::zeros(n);
        for k in 0..self.n_r {
            t.set(0, k + 1, self.control_shifts[k]);
            for j in 0..k {
                t.set(k + 1, j + 1, self.reg_shifts.get(k, j));
            }
        }
        t
    }

    pub fn evolve(&self, state: &mut BlockState) -> Result<()> {
        self.check_state(state)?;
        let mut blocks = [
            (&mut state.zz, GateChannel::ZERO_ZERO),
            (&mut state.rr, GateChannel::RYD_RYD),
            (&mut state.zr, GateChannel::ZERO_RYD),
        ];
        self.run(&mut blocks, false);
        Ok(())
    }

    /// Heisenberg-picture propagation: for any `rho`,
    /// `<X, evolve(rho)> = <evolve_adjoint(X), rho>` blockwise, with
    /// `<X, rho> = tr(X^dagger rho)`.
    pub fn evolve_adjoint(&self, obs: &mut BlockState) -> Result<()> {
        self.check_state(obs)?;
        let mut blocks = [
            (&mut obs.zz, GateChannel::ZERO_ZERO),
            (&mut obs.rr, GateChannel::RYD_RYD),
            (&mut obs.zr, GateChannel::ZERO_RYD),
        ];
        self.run(&mut blocks, true);
        Ok(())
    }

    /// Propagate one register block.
    pub fn evolve_block(&self, block: &mut DMatrix<C64>, channel: GateChannel, adjoint: bool) -> Result<()> {
        let d = dim_for(self.n_r);
        if block.nrows() != d || block.ncols() != d {
            return Err(Error::DimensionMismatch { expected: d, found: block.nrows() });
        }
        self.run(&mut [(block, channel)], adjoint);
        Ok(())
    }

    fn check_state(&self, s: &BlockState) -> Result<()> {
        let d = dim_for(self.n_r);
        if s.n_r != self.n_r || s.zz.nrows() != d {
            return Err(Error::DimensionMismatch { expected: self.n_r, found: s.n_r });
        }
        Ok(())
    }

    fn run(&self, blocks: &mut [(&mut DMatrix<C64>, GateChannel)], adjoint: bool) {
        let tau = self.pulses.tau();
        let dt = tau / self.slices as f64;
        let diss = LocalChannel::new(&self.scheme, self.n_r, self.control_decoherence);
        let dissipative = diss.active();
        let need_zero = blocks.iter().any(|(_, c)| !c.left_rydberg || !c.right_rydberg);
        let need_ryd = blocks.iter().any(|(_, c)| c.left_rydberg || c.right_rydberg);

        for step in 0..self.slices {
            let j = if adjoint { self.slices - 1 - step } else { step };
            let tm = (j as f64 + 0.5) * dt;
            let e0 = need_zero.then(|| self.slice_eigen(false, tm, dt));
            let ex = need_ryd.then(|| self.slice_eigen(true, tm, dt));
            let half = if step == 0 { 0.5 * dt } else { dt };
            for (m, ch) in blocks.iter_mut() {
                if dissipative {
                    diss.apply(m, *ch, half);
                }
                rotate_to_dark(m, self.n_r, true);
                let l = if ch.left_rydberg { ex.as_ref().unwrap() } else { e0.as_ref().unwrap() };
                let r = if ch.right_rydberg { ex.as_ref().unwrap() } else { e0.as_ref().unwrap() };
                self.apply_slice(m, l, r, dt, adjoint);
                rotate_to_dark(m, self.n_r, false);
            }
        }
        if dissipative {
            for (m, ch) in blocks.iter_mut() {
                diss.apply(m, *ch, 0.5 * dt);
            }
        }
    }

    /// Eigen-decomposition of every dark-set block of the effective
    /// Hamiltonian at `t`, decay out of `|e>` and `|x>` entering as an
    /// anti-Hermitian diagonal.
    fn slice_eigen(&self, rydberg: bool, t: f64, dt: f64) -> Vec<BlockEigen> {
        let n = self.n_r;
        let o2 = self.pulses.omega2(t) * FRAC_1_SQRT_2;
        let o3 = 0.5 * self.pulses.omega3();
        let gamma_x = 0.5 * self.scheme.gamma_ryd;
        self.blocks
            .iter()
            .map(|idx| {
                let m = idx.len();
                let mut h = DMatrix::<f64>::zeros(m, m);
                let mut decay = vec![0.0; m];
                for (p, &a) in idx.iter().enumerate() {
                    let mut diag = 0.0;
                    for k in 0..n {
                        match digit(a, k, n) {
                            LEVEL_E => {
                                diag += self.scheme.delta_e;
                                decay[p] += self.scheme.gamma_e;
                            }
                            LEVEL_X => {
                                decay[p] += gamma_x;
                                if rydberg {
                                    diag += self.control_shifts[k];
                                }
                                for i in 0..k {
                                    if digit(a, i, n) == LEVEL_X {
                                        diag += self.reg_shifts.get(k, i);
                                    }
                                }
                            }
                            _ => {}
                        }
                    }
                    h[(p, p)] = diag;
                    for k in 0..n {
                        let (partner, v) = match digit(a, k, n) {
                            SLOT_B => (LEVEL_E, o2),
                            LEVEL_E => (LEVEL_X, o3),
                            _ => continue,
                        };
                        let b = with_digit(a, k, n, partner);
                        if let Some(q) = idx.iter().position(|&z| z == b) {
                            h[(p, q)] = v;
                            h[(q, p)] = v;
                        }
                    }
                }
                BlockEigen::new(h, &decay, dt)
            })
            .collect()
    }

    /// One slice on every dark-set block pair: `rho <- U_l rho U_r^dagger`
    /// plus the `|e>` feed `J(int_0^dt U_l(s) rho U_r(s)^dagger ds)`, or the
    /// adjoint of that map.
    fn apply_slice(&self, rho: &mut DMatrix<C64>, l: &[BlockEigen], r: &[BlockEigen], dt: f64, adjoint: bool) {
        let n = self.n_r;
        let d = dim_for(n);
        let gamma_e = self.scheme.gamma_e;
        let feed = gamma_e != 0.0;
        let mut out = DMatrix::<C64>::zeros(d, d);
        let mut integral = DMatrix::<C64>::zeros(d, d);
        let source = if adjoint && feed { Some(feed_adjoint(&self.carry(rho, l, r, true), n, gamma_e)) } else { None };
        for (p, ip) in self.blocks.iter().enumerate() {
            for (q, iq) in self.blocks.iter().enumerate() {
                let (lp, rq) = (&l[p], &r[q]);
                let sub = DMatrix::from_fn(ip.len(), iq.len(), |a, b| rho[(ip[a], iq[b])]);
                let kernel = |a: usize, b: usize| lp.lambda[a] - rq.lambda[b].conj();
                if adjoint {
                    let mut m = lp.v.adjoint() * sub * &rq.v;
                    for b in 0..m.ncols() {
                        for a in 0..m.nrows() {
                            m[(a, b)] *= C64::exp(C64::new(0.0, -dt) * kernel(a, b)).conj();
                        }
                    }
                    let mut res = lp.vinv.adjoint() * m * &rq.vinv;
                    if let Some(y) = &source {
                        let ysub = DMatrix::from_fn(ip.len(), iq.len(), |a, b| y[(ip[a], iq[b])]);
                        let mut m = lp.v.adjoint() * ysub * &rq.v;
                        for b in 0..m.ncols() {
                            for a in 0..m.nrows() {
                                m[(a, b)] *= phi(kernel(a, b), dt).conj();
                            }
                        }
                        res += lp.vinv.adjoint() * m * &rq.vinv;
                    }
                    scatter(&mut out, &res, ip, iq);
                } else {
                    let m = &lp.vinv * sub * rq.vinv.adjoint();
                    let mut e = m.clone();
                    for b in 0..m.ncols() {
                        for a in 0..m.nrows() {
                            e[(a, b)] *= C64::exp(C64::new(0.0, -dt) * kernel(a, b));
                        }
                    }
                    scatter(&mut out, &(&lp.v * e * rq.v.adjoint()), ip, iq);
                    if feed {
                        let mut f = m;
                        for b in 0..f.ncols() {
                            for a in 0..f.nrows() {
                                f[(a, b)] *= phi(kernel(a, b), dt);
                            }
                        }
                        scatter(&mut integral, &(&lp.v * f * rq.v.adjoint()), ip, iq);
                    }
                }
            }
        }
        if feed && !adjoint {
            let mut fed = DMatrix::<C64>::zeros(d, d);
            feed_forward(&mut fed, &integral, n, gamma_e);
            out += self.carry(&fed, l, r, false);
        }
        *rho = out;
    }

    /// Blockwise `H_l^half X H_r^half^dagger`, or with `dagger` the adjoint
    /// `H_l^half^dagger X H_r^half`.
    fn carry(&self, x: &DMatrix<C64>, l: &[BlockEigen], r: &[BlockEigen], dagger: bool) -> DMatrix<C64> {
        let d = x.nrows();
        let mut out = DMatrix::<C64>::zeros(d, d);
        for (p, ip) in self.blocks.iter().enumerate() {
            let hl = &l[p].half;
            for (q, iq) in self.blocks.iter().enumerate() {
                let hr = &r[q].half;
                let sub = DMatrix::from_fn(ip.len(), iq.len(), |a, b| x[(ip[a], iq[b])]);
                let res = if dagger { hl.adjoint() * sub * hr } else { hl * sub * hr.adjoint() };
                scatter(&mut out, &res, ip, iq);
            }
        }
        out
    }
}

/// `H = V diag(lambda) V^-1` for one dark-set block.
struct BlockEigen {
    v: DMatrix<C64>,
    vinv: DMatrix<C64>,
    lambda: Vec<C64>,
    /// `exp(-i H_herm dt / 2)`, the half step that carries the `|e>` feed
    /// from the slice midpoint to its end.
    half: DMatrix<C64>,
}

impl BlockEigen {
    fn new(h: DMatrix<f64>, decay: &[f64], dt: f64) -> Self {
        let m = h.nrows();
        let eig = SymmetricEigen::new(h.clone());
        let vr = eig.eigenvectors.map(|x| C64::new(x, 0.0));
        let ph = DMatrix::from_fn(m, m, |a, b| {
            if a == b {
                C64::from_polar(1.0, -0.5 * dt * eig.eigenvalues[a])
            } else {
                C64::new(0.0, 0.0)
            }
        });
        let half = &vr * ph * vr.transpose();
        if decay.iter().all(|&g| g == 0.0) {
            return Self {
                vinv: vr.transpose(),
                v: vr,
                lambda: eig.eigenvalues.iter().map(|&x| C64::new(x, 0.0)).collect(),
                half,
            };
        }
        let hc = DMatrix::from_fn(m, m, |a, b| C64::new(h[(a, b)], if a == b { -decay[a] } else { 0.0 }));
        let e = eigen::eigen(hc).expect("QR iteration converges on a weakly damped symmetric block");
        Self { v: e.v, vinv: e.vinv, lambda: e.lambda, half }
    }
}

/// `int_0^dt exp(-i z s) ds`.
fn phi(z: C64, dt: f64) -> C64 {
    let w = z * dt;
    if w.norm() < 1e-4 {
        let i = C64::new(0.0, 1.0);
        dt * (C64::new(1.0, 0.0) - i * w / 2.0 - w * w / 6.0 + i * w * w * w / 24.0)
    } else {
        (C64::new(1.0, 0.0) - C64::exp(-C64::new(0.0, 1.0) * w)) / (C64::new(0.0, 1.0) * z)
    }
}

fn scatter(dst: &mut DMatrix<C64>, src: &DMatrix<C64>, rows: &[usize], cols: &[usize]) {
    for (c, &b) in cols.iter().enumerate() {
        for (r, &a) in rows.iter().enumerate() {
            dst[(a, b)] = src[(r, c)];
        }
    }
}

/// `rho += gamma_e sum_k (|D><e| X |e><D| + |B><e| X |e><B|)_k`, the decay of
/// `|e>` into `|0>, |1>` written in the rotated basis.
fn feed_forward(rho: &mut DMatrix<C64>, x: &DMatrix<C64>, n: usize, gamma_e: f64) {
    let d = dim_for(n);
    for k in 0..n {
        for b in 0..d {
            if digit(b, k, n) != LEVEL_E {
                continue;
            }
            for a in 0..d {
                if digit(a, k, n) != LEVEL_E {
                    continue;
                }
                let v = x[(a, b)] * gamma_e;
                for q in [SLOT_D, SLOT_B] {
                    rho[(with_digit(a, k, n, q), with_digit(b, k, n, q))] += v;
                }
            }
        }
    }
}

/// Adjoint of the feed applied to an observable.
fn feed_adjoint(obs: &DMatrix<C64>, n: usize, gamma_e: f64) -> DMatrix<C64> {
    let d = dim_for(n);
    let mut y = DMatrix::<C64>::zeros(d, d);
    for k in 0..n {
        for b in 0..d {
            if digit(b, k, n) != LEVEL_E {
                continue;
            }
            for a in 0..d {
                if digit(a, k, n) != LEVEL_E {
                    continue;
                }
                let mut acc = C64::new(0.0, 0.0);
                for q in [SLOT_D, SLOT_B] {
                    acc += obs[(with_digit(a, k, n, q), with_digit(b, k, n, q))];
                }
                y[(a, b)] += acc * gamma_e;
            }
        }
    }
    y
}

/// Basis indices grouped by the set of atoms in the dark slot `D`.
fn dark_blocks(n: usize) -> Vec<Vec<usize>> {
    let d = dim_for(n);
    let mut out = Vec::new();
    for mask in 0..(1usize << n) {
        let idx: Vec<usize> = (0..d)
            .filter(|&a| (0..n).all(|k| (digit(a, k, n) == SLOT_D) == (mask >> k & 1 == 1)))
            .collect();
        out.push(idx);
    }
    out
}

/// `rho <- Q rho Q^T` (or its inverse) on the qubit levels of every atom,
/// with `Q = [[1, -1], [1, 1]] / sqrt 2` mapping `(|0>, |1>)` to `(D, B)`.
fn rotate_to_dark(rho: &mut DMatrix<C64>, n: usize, forward: bool) {
    let d = dim_for(n);
    let s = FRAC_1_SQRT_2;
    // Rows of Q act on (l0, l1); the inverse is Q^T.
    let q = if forward { [[s, -s], [s, s]] } else { [[s, s], [-s, s]] };
    for k in 0..n {
        let sh = 2 * (n - 1 - k);
        for col in 0..d {
            for base in 0..d {
                if (base >> sh) & 3 != 0 {
                    continue;
                }
                let i0 = base;
                let i1 = base | (1 << sh);
                let (a, b) = (rho[(i0, col)], rho[(i1, col)]);
                rho[(i0, col)] = a * q[0][0] + b * q[0][1];
                rho[(i1, col)] = a * q[1][0] + b * q[1][1];
            }
        }
        for row in 0..d {
            for base in 0..d {
                if (base >> sh) & 3 != 0 {
                    continue;
                }
                let i0 = base;
                let i1 = base | (1 << sh);
                let (a, b) = (rho[(row, i0)], rho[(row, i1)]);
                rho[(row, i0)] = a * q[0][0] + b * q[0][1];
                rho[(row, i1)] = a * q[1][0] + b * q[1][1];
            }
        }
    }
}

/// Dephasing over a time step, plus the control's decay and dephasing
/// factor for the block.
struct LocalChannel {
    n: usize,
    scheme: AtomLevelScheme,
    control: bool,
}

impl LocalChannel {
    fn new(scheme: &AtomLevelScheme, n: usize, control: bool) -> Self {
        Self { n, scheme: *scheme, control }
    }

    fn active(&self) -> bool {
        self.scheme.gamma_dph != 0.0 || self.scheme.gamma_ryd != 0.0
    }

    /// Self-adjoint, so the same call serves both pictures.
    fn apply(&self, rho: &mut DMatrix<C64>, ch: GateChannel, dt: f64) {
        let n = self.n;
        let d = dim_for(n);
        let (cl, cr) = ch.control_levels();
        let control = if self.control { (-atom_rate(&self.scheme, cl, cr) * dt).exp() } else { 1.0 };
        // Register decay lives in the slice exponentials.
        let deph = AtomLevelScheme { gamma_e: 0.0, gamma_ryd: 0.0, ..self.scheme };
        let mut f = [[0.0; 4]; 4];
        for (la, row) in f.iter_mut().enumerate() {
            for (lb, v) in row.iter_mut().enumerate() {
                *v = (-atom_rate(&deph, la, lb) * dt).exp();
            }
        }
        for b in 0..d {
            for a in 0..d {
                let mut w = control;
                for k in 0..n {
                    w *= f[digit(a, k, n)][digit(b, k, n)];
                }
                rho[(a, b)] *= w;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lindblad::{apply_perfect_unitary, integrate_setup, GateSetup, IntegrateOptions, PerfectUnitary};
    use crate::units;

    fn gate(n_r: usize, v_c: f64, gamma_dph: f64, slices: usize) -> ControlledGate {
        let scheme = AtomLevelScheme { gamma_dph, ..AtomLevelScheme::default() };
        let mut reg = ShiftTable::zeros(n_r);
        for i in 0..n_r {
            for j in 0..i {
                reg.set(i, j, units::mhz_to_rad(40.0 + 10.0 * (i + j) as f64));
            }
        }
        let vc = (0..n_r).map(|k| v_c * (1.0 + 0.3 * k as f64)).collect();
        ControlledGate::new(scheme, PulseSchedule::default(), vc, reg, SplitOptions { slices }).unwrap()
    }

    fn dense_reference(g: &ControlledGate, state: &BlockState) -> BlockState {
        let n = g.n_r + 1;
        let mut driven = vec![true; n];
        driven[0] = false;
        let setup = GateSetup { scheme: g.scheme, pulses: g.pulses, shifts: g.full_shift_table(), driven };
        let rho = state.to_density().unwrap();
        let (out, _) = integrate_setup(&rho, &setup, (0.0, g.pulses.tau()), &IntegrateOptions::default()).unwrap();
        BlockState::from_density(&out).unwrap()
    }

    fn max_diff(a: &BlockState, b: &BlockState) -> f64 {
        (&a.zz - &b.zz).camax().max((&a.rr - &b.rr).camax()).max((&a.zr - &b.zr).camax())
    }

    #[test]
    fn split_step_matches_dense_single_atom() {
        let g = gate(1, units::mhz_to_rad(150.0), units::hz_to_rad(1e5), 400);
        let mut s = BlockState::initial(1, 0.95, 0.9);
        let reference = dense_reference(&g, &s);
        g.evolve(&mut s).unwrap();
        let e = max_diff(&s, &reference);
        assert!(e < 5e-5, "{e}");
    }

    #[test]
    fn split_step_matches_dense_two_atoms() {
        let g = gate(2, units::mhz_to_rad(90.0), units::hz_to_rad(1e5), 400);
        let mut s = BlockState::initial(2, 0.95, 0.9);
        let reference = dense_reference(&g, &s);
        g.evolve(&mut s).unwrap();
        let e = max_diff(&s, &reference);
        assert!(e < 5e-5, "{e}");
    }

    #[test]
    fn fringe_coefficients_match_forward_readout() {
        let g1 = gate(2, units::mhz_to_rad(70.0), units::hz_to_rad(1e5), 60);
        let g2 = gate(2, units::mhz_to_rad(120.0), units::hz_to_rad(1e5), 60);
        let mut b = BlockState::initial(2, 0.9, 0.8);
        g1.evolve(&mut b).unwrap();
        let mut x = BlockState::qubit_projector(2);
        g2.evolve_adjoint(&mut x).unwrap();
        let c = FringeCoefficients::from_blocks(&b, &x, None).unwrap();
        for phase in [0.0, 0.7, 2.0, 3.1] {
            let mut s = b.clone();
            s.apply_free_evolution(phase);
            g2.evolve(&mut s).unwrap();
            let direct = s.readout(0.05).unwrap();
            let fast = c.readout(phase, 0.05).unwrap();
            assert!((direct.rho - fast.rho).camax() < 1e-12);
            assert!((direct.leakage - fast.leakage).abs() < 1e-12);
        }
    }

    #[test]
    fn product_of_single_atoms_matches_non_interacting_pair() {
        let scheme = AtomLevelScheme { gamma_dph: units::hz_to_rad(1e5), ..AtomLevelScheme::default() };
        let opts = SplitOptions { slices: 60 };
        let v = [units::mhz_to_rad(80.0), units::mhz_to_rad(150.0)];
        let w = [units::mhz_to_rad(60.0), units::mhz_to_rad(300.0)];
        let pulses = PulseSchedule::default();
        let pair = |shifts: [f64; 2]| ControlledGate::new(scheme, pulses, shifts.to_vec(), ShiftTable::zeros(2), opts).unwrap();
        let (p_c, p_r) = (0.9, 0.8);
        let mut b = BlockState::initial(2, p_c, p_r);
        pair(v).evolve(&mut b).unwrap();
        let mut x = BlockState::qubit_projector(2);
        pair(w).evolve_adjoint(&mut x).unwrap();
        let full = FringeCoefficients::from_blocks(&b, &x, None).unwrap();

        let mut parts = Vec::new();
        let mut factors = [0.5, 0.5, 0.5 * p_c];
        for k in 0..2 {
            let g1 = ControlledGate::single(scheme, pulses, v[k], opts).unwrap().without_control_decoherence();
            let g2 = ControlledGate::single(scheme, pulses, w[k], opts).unwrap().without_control_decoherence();
            if k == 0 {
                for (f, ch) in factors.iter_mut().zip([GateChannel::ZERO_ZERO, GateChannel::RYD_RYD, GateChannel::ZERO_RYD]) {
                    *f *= g1.control_factor(ch) * g2.control_factor(ch);
                }
            }
            let mut b = BlockState::register_only(1, p_r);
            g1.evolve(&mut b).unwrap();
            let mut x = BlockState::qubit_projector(1);
            g2.evolve_adjoint(&mut x).unwrap();
            parts.push(FringeCoefficients::from_blocks(&b, &x, None).unwrap());
        }
        let prod = FringeCoefficients::product(&parts, factors);
        for phase in [0.0, 0.4, 1.9] {
            let a = full.readout(phase, 0.05).unwrap();
            let b = prod.readout(phase, 0.05).unwrap();
            // The midpoint feed carry factorises only up to the slice error.
            assert!((a.rho - b.rho).camax() < 1e-5, "{}", (a.rho - b.rho).camax());
        }
    }

    #[test]
    fn split_step_keeps_invariants() {
        let g = gate(3, units::mhz_to_rad(90.0), units::hz_to_rad(1e5), 200);
        let mut s = BlockState::initial(3, 0.95, 0.9);
        g.evolve(&mut s).unwrap();
        let r = s.invariant_report().unwrap();
        assert!(r.trace_error < 1e-11, "{r:?}");
        assert!(r.hermiticity_defect < 1e-12 && r.min_eigenvalue > -1e-12, "{r:?}");
    }

    #[test]
    fn split_step_error_is_second_order() {
        let s0 = BlockState::initial(2, 0.95, 0.9);
        let reference = dense_reference(&gate(2, units::mhz_to_rad(90.0), units::hz_to_rad(1e5), 100), &s0);
        let err = |slices| {
            let mut s = s0.clone();
            gate(2, units::mhz_to_rad(90.0), units::hz_to_rad(1e5), slices).evolve(&mut s).unwrap();
            max_diff(&s, &reference)
        };
        let (coarse, fine) = (err(200), err(1600));
        assert!(coarse / fine > 20.0, "{coarse} {fine}");
    }

    #[test]
    fn adjoint_pairs_with_forward() {
        let g = gate(2, units::mhz_to_rad(90.0), units::hz_to_rad(3e5), 40);
        let rho = BlockState::initial(2, 0.8, 0.6);
        let mut fwd = rho.clone();
        g.evolve(&mut fwd).unwrap();
        let mut obs = BlockState::qubit_projector(2);
        obs.zr[(1, 2)] = C64::new(0.3, -0.1);
        let x0 = obs.clone();
        g.evolve_adjoint(&mut obs).unwrap();
        let pair = |x: &DMatrix<C64>, r: &DMatrix<C64>| x.zip_map(r, |a, b| a.conj() * b).sum();
        for (xa, ra, xb, rb) in [(&x0.zz, &fwd.zz, &obs.zz, &rho.zz), (&x0.zr, &fwd.zr, &obs.zr, &rho.zr)] {
            let lhs = pair(xa, ra);
            let rhs = pair(xb, rb);
            assert!((lhs - rhs).norm() < 1e-12, "{lhs} {rhs}");
        }
    }

    #[test]
    fn readout_matches_full_partial_trace() {
        let g = gate(1, units::mhz_to_rad(300.0), units::hz_to_rad(1e4), 100);
        let mut s = BlockState::initial(1, 0.9, 0.7);
        g.evolve(&mut s).unwrap();
        let r = s.readout(0.05).unwrap();
        let mut rho = s.to_density().unwrap();
        rho = apply_perfect_unitary(&rho, PerfectUnitary::ControlToRydberg);
        rho = apply_perfect_unitary(&rho, PerfectUnitary::HadamardOnControl);
        let full = crate::lindblad::partial_trace_register(&rho, 0.05).unwrap();
        assert!((r.rho - full.rho).camax() < 1e-12);
        assert!((r.leakage - full.leakage).abs() < 1e-12);
    }
}
