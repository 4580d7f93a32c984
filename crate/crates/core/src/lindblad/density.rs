//! Dense density matrices over `n` four-level atoms.
//!
//! Basis index of the configuration `(l_0, .., l_{n-1})` is
//! `sum_k l_k 4^(n-1-k)`; atom 0 is the control.

use alloc::vec::Vec;
use nalgebra::{DMatrix, Matrix2, Matrix4};
#[allow(unused_imports)]
use num_traits::Float;

use super::{LEVEL_0, LEVEL_1, LEVEL_X, MAX_ATOMS};
use crate::error::{invalid, Error, Result};
use crate::C64;

/// `4^n`
pub fn dim_for(n_atoms: usize) -> usize {
    1usize << (2 * n_atoms)
}

/// Level of atom `k` in basis index `idx`.
#[inline]
pub fn digit(idx: usize, k: usize, n_atoms: usize) -> usize {
    (idx >> (2 * (n_atoms - 1 - k))) & 3
}

/// `idx` with atom `k` set to `level`.
#[inline]
pub fn with_digit(idx: usize, k: usize, n_atoms: usize, level: usize) -> usize {
    let sh = 2 * (n_atoms - 1 - k);
    (idx & !(3 << sh)) | (level << sh)
}

/// Whether every atom of `idx` sits in `{|0>, |1>}`.
#[inline]
pub fn in_qubit_subspace(idx: usize, n_atoms: usize) -> bool {
    (0..n_atoms).all(|k| digit(idx, k, n_atoms) <= LEVEL_1)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    n_atoms: usize,
    data: DMatrix<C64>,
}

/// Bounds used by [`DensityMatrix::check_invariants`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InvariantTolerances {
    pub trace: f64,
    pub hermiticity: f64,
    pub min_eigenvalue: f64,
}

impl Default for InvariantTolerances {
    fn default() -> Self {
        Self { trace: 1e-8, hermiticity: 1e-10, min_eigenvalue: -1e-7 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, serde::Serialize)]
pub struct InvariantReport {
    pub trace_error: f64,
    pub hermiticity_defect: f64,
    pub min_eigenvalue: f64,
}

impl InvariantReport {
    /// Componentwise worst case.
    pub fn merge(&mut self, other: &Self) {
        self.trace_error = self.trace_error.max(other.trace_error);
        self.hermiticity_defect = self.hermiticity_defect.max(other.hermiticity_defect);
        self.min_eigenvalue = self.min_eigenvalue.min(other.min_eigenvalue);
    }

    pub fn check(&self, tol: &InvariantTolerances) -> Result<()> {
        if self.trace_error > tol.trace {
            return Err(Error::InvariantViolation { what: "trace", value: self.trace_error, limit: tol.trace });
        }
        if self.hermiticity_defect > tol.hermiticity {
            return Err(Error::InvariantViolation {
                what: "hermiticity",
                value: self.hermiticity_defect,
                limit: tol.hermiticity,
            });
        }
        if self.min_eigenvalue < tol.min_eigenvalue {
            return Err(Error::InvariantViolation {
                what: "min_eigenvalue",
                value: self.min_eigenvalue,
                limit: tol.min_eigenvalue,
            });
        }
        Ok(())
    }
}

/// Single-atom qubit state `(1+p)/2 |0><0| + (1-p)/2 |1><1|`.
pub fn mixed_qubit(p: f64) -> Matrix4<C64> {
    let mut m = Matrix4::zeros();
    m[(LEVEL_0, LEVEL_0)] = C64::new((1.0 + p) / 2.0, 0.0);
    m[(LEVEL_1, LEVEL_1)] = C64::new((1.0 - p) / 2.0, 0.0);
    m
}

/// Kronecker product of a list of matrices.
pub fn kron_all(factors: &[DMatrix<C64>]) -> DMatrix<C64> {
    let mut out = DMatrix::from_element(1, 1, C64::new(1.0, 0.0));
    for f in factors {
        out = out.kronecker(f);
    }
    out
}

impl DensityMatrix {
    pub fn from_matrix(n_atoms: usize, data: DMatrix<C64>) -> Result<Self> {
        check_atoms(n_atoms)?;
        let d = dim_for(n_atoms);
        if data.nrows() != d || data.ncols() != d {
            return Err(Error::DimensionMismatch { expected: d, found: data.nrows() });
        }
        Ok(Self { n_atoms, data })
    }

    pub fn from_product(atoms: &[Matrix4<C64>]) -> Result<Self> {
        check_atoms(atoms.len())?;
        let factors: Vec<DMatrix<C64>> = atoms.iter().map(|m| DMatrix::from_iterator(4, 4, m.iter().copied())).collect();
        Ok(Self { n_atoms: atoms.len(), data: kron_all(&factors) })
    }

    /// Control (atom 0) with purity `p_c`, then `n_r` registers with purity `p_r`.
    pub fn from_purities(n_r: usize, p_c: f64, p_r: f64) -> Result<Self> {
        let mut atoms = Vec::with_capacity(n_r + 1);
        atoms.push(mixed_qubit(p_c));
        atoms.extend((0..n_r).map(|_| mixed_qubit(p_r)));
        Self::from_product(&atoms)
    }

    /// Pure product state of the given levels.
    pub fn basis_state(levels: &[usize]) -> Result<Self> {
        check_atoms(levels.len())?;
        let n = levels.len();
        let mut idx = 0;
        for (k, &l) in levels.iter().enumerate() {
            if l > LEVEL_X {
                return Err(invalid("levels", "level index must be < 4"));
            }
            idx = with_digit(idx, k, n, l);
        }
        let d = dim_for(n);
        let mut data = DMatrix::zeros(d, d);
        data[(idx, idx)] = C64::new(1.0, 0.0);
        Ok(Self { n_atoms: n, data })
    }

    pub fn n_atoms(&self) -> usize {
        self.n_atoms
    }

    pub fn dim(&self) -> usize {
        self.data.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.data
    }

    pub fn matrix_mut(&mut self) -> &mut DMatrix<C64> {
        &mut self.data
    }

    pub fn into_matrix(self) -> DMatrix<C64> {
        self.data
    }

    pub fn get(&self, a: usize, b: usize) -> C64 {
        self.data[(a, b)]
    }

    pub fn trace(&self) -> C64 {
        self.data.trace()
    }

    /// `max |rho - rho^dagger|`
    pub fn hermiticity_defect(&self) -> f64 {
        let d = self.dim();
        let mut m: f64 = 0.0;
        for j in 0..d {
            for i in 0..=j {
                m = m.max((self.data[(i, j)] - self.data[(j, i)].conj()).norm());
            }
        }
        m
    }

    pub fn min_eigenvalue(&self) -> f64 {
        let h = (&self.data + self.data.adjoint()) * C64::new(0.5, 0.0);
        let eig = nalgebra::SymmetricEigen::new(h);
        eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn invariant_report(&self) -> InvariantReport {
        InvariantReport {
            trace_error: (self.trace() - C64::new(1.0, 0.0)).norm(),
            hermiticity_defect: self.hermiticity_defect(),
            min_eigenvalue: self.min_eigenvalue(),
        }
    }

    pub fn check_invariants(&self, tol: &InvariantTolerances) -> Result<InvariantReport> {
        let r = self.invariant_report();
        r.check(tol)?;
        Ok(r)
    }

    /// Population of configuration `levels`.
    pub fn population(&self, levels: &[usize]) -> f64 {
        let mut idx = 0;
        for (k, &l) in levels.iter().enumerate() {
            idx = with_digit(idx, k, self.n_atoms, l);
        }
        self.data[(idx, idx)].re
    }

    /// Marginal populations of atom `k` over its four levels.
    pub fn atom_populations(&self, k: usize) -> [f64; 4] {
        let mut p = [0.0; 4];
        for i in 0..self.dim() {
            p[digit(i, k, self.n_atoms)] += self.data[(i, i)].re;
        }
        p
    }

    /// `rho <- U rho U^dagger` with `u` acting on atom `k`.
    pub fn apply_single_atom(&mut self, k: usize, u: &Matrix4<C64>) {
        let n = self.n_atoms;
        let d = self.dim();
        let sh = 2 * (n - 1 - k);
        let mut tmp = [C64::new(0.0, 0.0); 4];
        // Left multiplication: columns are independent.
        for col in 0..d {
            for base in 0..d {
                if (base >> sh) & 3 != 0 {
                    continue;
                }
                for l in 0..4 {
                    tmp[l] = self.data[(base | (l << sh), col)];
                }
                for l in 0..4 {
                    let mut acc = C64::new(0.0, 0.0);
                    for m in 0..4 {
                        acc += u[(l, m)] * tmp[m];
                    }
                    self.data[(base | (l << sh), col)] = acc;
                }
            }
        }
        // Right multiplication by U^dagger.
        for row in 0..d {
            for base in 0..d {
                if (base >> sh) & 3 != 0 {
                    continue;
                }
                for l in 0..4 {
                    tmp[l] = self.data[(row, base | (l << sh))];
                }
                for l in 0..4 {
                    let mut acc = C64::new(0.0, 0.0);
                    for m in 0..4 {
                        acc += tmp[m] * u[(l, m)].conj();
                    }
                    self.data[(row, base | (l << sh))] = acc;
                }
            }
        }
    }
}

fn check_atoms(n: usize) -> Result<()> {
    if n == 0 {
        return Err(invalid("n_atoms", "must be >= 1"));
    }
    if n > MAX_ATOMS {
        return Err(Error::DimensionOverflow { n_atoms: n, max: MAX_ATOMS });
    }
    Ok(())
}

/// Ideal operations outside the gates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PerfectUnitary {
    /// Hadamard on the control qubit levels; `|e>`, `|x>` untouched.
    HadamardOnControl,
    /// `exp(-i w t)` on `|1>` of every register atom.
    FreeEvolution { omega: f64, t: f64 },
    /// Phase-free exchange of `|1>` and `|x>` on the control.
    ControlToRydberg,
}

impl PerfectUnitary {
    fn atom_unitary(&self) -> Matrix4<C64> {
        let one = C64::new(1.0, 0.0);
        let mut u = Matrix4::<C64>::identity();
        match *self {
            PerfectUnitary::HadamardOnControl => {
                let h = core::f64::consts::FRAC_1_SQRT_2;
                u[(LEVEL_0, LEVEL_0)] = C64::new(h, 0.0);
                u[(LEVEL_0, LEVEL_1)] = C64::new(h, 0.0);
                u[(LEVEL_1, LEVEL_0)] = C64::new(h, 0.0);
                u[(LEVEL_1, LEVEL_1)] = C64::new(-h, 0.0);
            }
            PerfectUnitary::FreeEvolution { omega, t } => {
                u[(LEVEL_1, LEVEL_1)] = C64::from_polar(1.0, -omega * t);
            }
            PerfectUnitary::ControlToRydberg => {
                u[(LEVEL_1, LEVEL_1)] = C64::new(0.0, 0.0);
                u[(LEVEL_X, LEVEL_X)] = C64::new(0.0, 0.0);
                u[(LEVEL_1, LEVEL_X)] = one;
                u[(LEVEL_X, LEVEL_1)] = one;
            }
        }
        u
    }
}

pub fn apply_perfect_unitary(rho: &DensityMatrix, which: PerfectUnitary) -> DensityMatrix {
    let mut out = rho.clone();
    let u = which.atom_unitary();
    match which {
        PerfectUnitary::FreeEvolution { .. } => {
            for k in 1..rho.n_atoms() {
                out.apply_single_atom(k, &u);
            }
        }
        _ => out.apply_single_atom(0, &u),
    }
    out
}

/// Control state over `{|0>, |1>}` after tracing out the register.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReducedControl {
    /// Renormalised over the retained subspace.
    pub rho: Matrix2<C64>,
    /// Population outside the all-qubit subspace.
    pub leakage: f64,
}

impl ReducedControl {
    /// `(P0, P1)` of a computational-basis measurement.
    pub fn probabilities(&self) -> (f64, f64) {
        (self.rho[(0, 0)].re, self.rho[(1, 1)].re)
    }
}

pub const DEFAULT_LEAKAGE_THRESHOLD: f64 = 0.05;

pub fn partial_trace_register(rho: &DensityMatrix, leakage_threshold: f64) -> Result<ReducedControl> {
    let n = rho.n_atoms();
    let d = rho.dim();
    let reg = d / 4;
    let mut m = Matrix2::<C64>::zeros();
    for s in 0..reg {
        if !in_qubit_subspace(s, n - 1) {
            continue;
        }
        for a in 0..2 {
            for b in 0..2 {
                m[(a, b)] += rho.get(a * reg + s, b * reg + s);
            }
        }
    }
    let kept = (m[(0, 0)] + m[(1, 1)]).re;
    let total = rho.trace().re;
    let leakage = ((total - kept) / total).max(0.0);
    if leakage > leakage_threshold {
        return Err(Error::Leakage { leakage, threshold: leakage_threshold });
    }
    if kept <= 0.0 {
        return Err(Error::Leakage { leakage: 1.0, threshold: leakage_threshold });
    }
    Ok(ReducedControl { rho: m / C64::new(kept, 0.0), leakage })
}
