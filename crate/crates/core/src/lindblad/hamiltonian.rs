//! Gate Hamiltonian and master-equation right-hand side.

use alloc::vec;
use alloc::vec::Vec;
use nalgebra::DMatrix;

use super::density::{digit, dim_for, with_digit, DensityMatrix};
use super::{AtomLevelScheme, LEVEL_0, LEVEL_1, LEVEL_E, LEVEL_X, MAX_ATOMS};
use crate::error::{invalid, Error, Result};
use crate::rydberg::PulseSchedule;
use crate::C64;

/// Symmetric table of pair shifts `V_ij` (rad/s) with zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct ShiftTable {
    n: usize,
    v: Vec<f64>,
}

impl ShiftTable {
    pub fn zeros(n: usize) -> Self {
        Self { n, v: vec![0.0; n * n] }
    }

    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let n = rows.len();
        let mut t = Self::zeros(n);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != n {
                return Err(Error::DimensionMismatch { expected: n, found: r.len() });
            }
            t.v[i * n..(i + 1) * n].copy_from_slice(r);
        }
        t.validate()?;
        Ok(t)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.v[i * self.n + j]
    }

    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        assert!(i != j, "diagonal of a shift table is fixed at zero");
        self.v[i * self.n + j] = value;
        self.v[j * self.n + i] = value;
    }

    pub fn validate(&self) -> Result<()> {
        for i in 0..self.n {
            if self.get(i, i) != 0.0 {
                return Err(invalid("shifts", "diagonal must be zero"));
            }
            for j in 0..i {
                if self.get(i, j) != self.get(j, i) {
                    return Err(invalid("shifts", "table must be symmetric"));
                }
                if !self.get(i, j).is_finite() {
                    return Err(invalid("shifts", "entries must be finite"));
                }
            }
        }
        Ok(())
    }
}

/// Everything needed to evolve `n` atoms through one gate.
#[derive(Debug, Clone, PartialEq)]
pub struct GateSetup {
    pub scheme: AtomLevelScheme,
    pub pulses: PulseSchedule,
    pub shifts: ShiftTable,
    /// Atoms that see the laser fields.
    pub driven: Vec<bool>,
}

impl GateSetup {
    pub fn all_driven(scheme: AtomLevelScheme, pulses: PulseSchedule, shifts: ShiftTable) -> Self {
        let n = shifts.n();
        Self { scheme, pulses, shifts, driven: vec![true; n] }
    }

    pub fn n_atoms(&self) -> usize {
        self.shifts.n()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_atoms();
        if n == 0 {
            return Err(invalid("n_atoms", "must be >= 1"));
        }
        if n > MAX_ATOMS {
            return Err(Error::DimensionOverflow { n_atoms: n, max: MAX_ATOMS });
        }
        if self.driven.len() != n {
            return Err(Error::DimensionMismatch { expected: n, found: self.driven.len() });
        }
        self.scheme.validate()?;
        self.pulses.params.validate()?;
        self.shifts.validate()
    }
}

/// `H(t) = static + Omega_2(t) raman`, both real and sparse.
#[derive(Debug, Clone)]
pub(crate) struct HamiltonianParts {
    pub dim: usize,
    pub fixed: Vec<(usize, usize, f64)>,
    pub raman: Vec<(usize, usize, f64)>,
}

pub(crate) fn hamiltonian_parts(setup: &GateSetup) -> Result<HamiltonianParts> {
    setup.validate()?;
    let n = setup.n_atoms();
    let dim = dim_for(n);
    let o3 = setup.pulses.omega3();
    let mut fixed = Vec::new();
    let mut raman = Vec::new();
    for a in 0..dim {
        let mut diag = 0.0;
        for k in 0..n {
            let l = digit(a, k, n);
            if setup.driven[k] && l == LEVEL_E {
                diag += setup.scheme.delta_e;
            }
        }
        for i in 0..n {
            for j in 0..i {
                if digit(a, i, n) == LEVEL_X && digit(a, j, n) == LEVEL_X {
                    diag += setup.shifts.get(i, j);
                }
            }
        }
        if diag != 0.0 {
            fixed.push((a, a, diag));
        }
        for k in 0..n {
            if !setup.driven[k] || digit(a, k, n) != LEVEL_E {
                continue;
            }
            for q in [LEVEL_0, LEVEL_1] {
                let b = with_digit(a, k, n, q);
                raman.push((a, b, 0.5));
                raman.push((b, a, 0.5));
            }
            if o3 != 0.0 {
                let b = with_digit(a, k, n, LEVEL_X);
                fixed.push((a, b, 0.5 * o3));
                fixed.push((b, a, 0.5 * o3));
            }
        }
    }
    Ok(HamiltonianParts { dim, fixed, raman })
}

impl HamiltonianParts {
    pub fn dense(&self, omega2: f64) -> DMatrix<C64> {
        let mut h = DMatrix::zeros(self.dim, self.dim);
        for &(a, b, v) in &self.fixed {
            h[(a, b)] += C64::new(v, 0.0);
        }
        for &(a, b, v) in &self.raman {
            h[(a, b)] += C64::new(v * omega2, 0.0);
        }
        h
    }
}

/// Gate Hamiltonian at time `t` with every atom driven.
pub fn build_hamiltonian(
    scheme: &AtomLevelScheme,
    n_atoms: usize,
    shifts: &ShiftTable,
    t: f64,
    pulses: &PulseSchedule,
) -> Result<DMatrix<C64>> {
    build_hamiltonian_masked(scheme, n_atoms, shifts, t, pulses, &vec![true; n_atoms])
}

/// Gate Hamiltonian at time `t`; only atoms flagged in `driven` see the lasers.
pub fn build_hamiltonian_masked(
    scheme: &AtomLevelScheme,
    n_atoms: usize,
    shifts: &ShiftTable,
    t: f64,
    pulses: &PulseSchedule,
    driven: &[bool],
) -> Result<DMatrix<C64>> {
    if n_atoms > MAX_ATOMS {
        return Err(Error::DimensionOverflow { n_atoms, max: MAX_ATOMS });
    }
    if shifts.n() != n_atoms {
        return Err(Error::DimensionMismatch { expected: n_atoms, found: shifts.n() });
    }
    let setup = GateSetup { scheme: *scheme, pulses: *pulses, shifts: shifts.clone(), driven: driven.to_vec() };
    Ok(hamiltonian_parts(&setup)?.dense(pulses.omega2(t)))
}

/// Precomputed entrywise dissipator: `D(rho)_ab = -rate_ab rho_ab + gamma_e sum feeds`.
#[derive(Debug, Clone)]
pub(crate) struct Dissipator {
    pub n: usize,
    pub dim: usize,
    /// Column-major `rate[a + b dim]`.
    pub rate: Vec<f64>,
    pub gamma_e: f64,
}

impl Dissipator {
    pub fn new(scheme: &AtomLevelScheme, n: usize) -> Self {
        let dim = dim_for(n);
        let mut rate = vec![0.0; dim * dim];
        for b in 0..dim {
            for a in 0..dim {
                let mut r = 0.0;
                for k in 0..n {
                    let (la, lb) = (digit(a, k, n), digit(b, k, n));
                    r += atom_rate(scheme, la, lb);
                }
                rate[a + b * dim] = r;
            }
        }
        Self { n, dim, rate, gamma_e: scheme.gamma_e }
    }

    /// `out += D(rho)` on column-major slices.
    pub fn accumulate(&self, rho: &[C64], out: &mut [C64]) {
        let (n, dim) = (self.n, self.dim);
        for b in 0..dim {
            for a in 0..dim {
                let i = a + b * dim;
                let mut acc = -rho[i] * self.rate[i];
                if self.gamma_e != 0.0 {
                    for k in 0..n {
                        let la = digit(a, k, n);
                        if la <= LEVEL_1 && la == digit(b, k, n) {
                            let ae = with_digit(a, k, n, LEVEL_E);
                            let be = with_digit(b, k, n, LEVEL_E);
                            acc += rho[ae + be * dim] * self.gamma_e;
                        }
                    }
                }
                out[i] += acc;
            }
        }
    }
}

/// Decay rate contributed by one atom to the `(la, lb)` entry.
pub(crate) fn atom_rate(s: &AtomLevelScheme, la: usize, lb: usize) -> f64 {
    let e = |l: usize| (l == LEVEL_E) as u8 as f64;
    let x = |l: usize| (l == LEVEL_X) as u8 as f64;
    let dph = |l: usize| (l != LEVEL_0) as u8 as f64;
    let mut r = s.gamma_e * (e(la) + e(lb)) + 0.5 * s.gamma_ryd * (x(la) + x(lb));
    if la != lb {
        r += 0.5 * s.gamma_dph * (dph(la) + dph(lb));
    }
    r
}

/// `d rho / dt = -i [H, rho] + D(rho)` with every atom subject to decay and
/// dephasing.
pub fn lindblad_rhs(rho: &DensityMatrix, h: &DMatrix<C64>, scheme: &AtomLevelScheme) -> Result<DMatrix<C64>> {
    let d = rho.dim();
    if h.nrows() != d || h.ncols() != d {
        return Err(Error::DimensionMismatch { expected: d, found: h.nrows() });
    }
    let r = rho.matrix();
    let mut out = (h * r - r * h) * C64::new(0.0, -1.0);
    let diss = Dissipator::new(scheme, rho.n_atoms());
    diss.accumulate(r.as_slice(), out.as_mut_slice());
    Ok(out)
}

/// `out = -i (H rho - rho H) + D(rho)` with sparse real `H`.
pub(crate) fn rhs_sparse(
    parts: &HamiltonianParts,
    omega2: f64,
    diss: &Dissipator,
    rho: &[C64],
    out: &mut [C64],
) {
    let dim = parts.dim;
    out.iter_mut().for_each(|z| *z = C64::new(0.0, 0.0));
    let mut apply = |a: usize, c: usize, h: f64| {
        // (H rho)_{a, b} += h rho_{c, b};  (rho H)_{b, c}... handled below.
        for b in 0..dim {
            let v = rho[c + b * dim] * h;
            out[a + b * dim] += C64::new(v.im, -v.re);
        }
        // (rho H)_{b, c} += rho_{b, a} h  ->  subtract.
        for b in 0..dim {
            let v = rho[b + a * dim] * h;
            out[b + c * dim] -= C64::new(v.im, -v.re);
        }
    };
    for &(a, c, h) in &parts.fixed {
        apply(a, c, h);
    }
    if omega2 != 0.0 {
        for &(a, c, h) in &parts.raman {
            apply(a, c, h * omega2);
        }
    }
    diss.accumulate(rho, out);
}
