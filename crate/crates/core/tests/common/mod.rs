//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;

fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

fn kron(a: &DMatrix<C64>, b: &DMatrix<C64>) -> DMatrix<C64> {
    a.kronecker(b)
}

/// Operator acting as `op` on qubit `q` of `n` (qubit 0 most significant).
fn on_qubit(op: &DMatrix<C64>, q: usize, n: usize) -> DMatrix<C64> {
    let mut m = DMatrix::from_element(1, 1, c(1.0));
    for k in 0..n {
        let f = if k == q { op.clone() } else { DMatrix::identity(2, 2) };
        m = kron(&m, &f);
    }
    m
}

/// CNOT with control qubit 0 and target `t`, built from basis states.
fn cnot(t: usize, n: usize) -> DMatrix<C64> {
    let d = 1 << n;
    let mut m = DMatrix::zeros(d, d);
    for s in 0..d {
        let ctrl = (s >> (n - 1)) & 1;
        let out = if ctrl == 1 { s ^ (1 << (n - 1 - t)) } else { s };
        m[(out, s)] = c(1.0);
    }
    m
}

/// Joint outcome probabilities `P(k, n)` from a dense density-matrix run of
/// Hadamard, CNOTs, field phases, CNOTs and Hadamard. Returned control major.
pub fn circuit_probabilities(n_r: usize, p_c: f64, p_r: f64, phase: f64) -> Vec<f64> {
    let n = n_r + 1;
    let mixed = |p: f64| DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![c((1.0 + p) / 2.0), c((1.0 - p) / 2.0)]));
    let mut rho = mixed(p_c);
    for _ in 0..n_r {
        rho = kron(&rho, &mixed(p_r));
    }
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let h = DMatrix::from_row_slice(2, 2, &[c(s), c(s), c(s), c(-s)]);
    let field = DMatrix::from_row_slice(2, 2, &[c(1.0), c(0.0), c(0.0), C64::from_polar(1.0, -phase)]);
    let hc = on_qubit(&h, 0, n);
    let mut u = hc.clone();
    for t in 1..n {
        u = cnot(t, n) * u;
    }
    for t in 1..n {
        u = on_qubit(&field, t, n) * u;
    }
    for t in 1..n {
        u = cnot(t, n) * u;
    }
    u = hc * u;
    let out = &u * rho * u.adjoint();
    let mut p = vec![0.0; 2 * (n_r + 1)];
    for st in 0..(1usize << n) {
        let k = (st >> n_r) & 1;
        let ones = (st & ((1 << n_r) - 1)).count_ones() as usize;
        p[k * (n_r + 1) + ones] += out[(st, st)].re;
    }
    p
}

/// Fisher information of a probability family by central differences of
/// an independently coded closed form.
pub fn joint_fisher_reference(n_r: usize, p_r: f64, t: f64) -> f64 {
    // sum_n w_n sum_k (dP)^2/P with P = w_n (1 +- cos(k w t))/2, p_C = 1;
    // each n contributes w_n k^2 t^2.
    let a = (1.0 + p_r) / 2.0;
    let b = (1.0 - p_r) / 2.0;
    let mut f = 0.0;
    for n in 0..=n_r {
        let mut binom = 1.0;
        for i in 0..n {
            binom *= (n_r - i) as f64 / (i + 1) as f64;
        }
        let w = binom * a.powi((n_r - n) as i32) * b.powi(n as i32);
        let k = n_r as f64 - 2.0 * n as f64;
        f += w * k * k;
    }
    f * t * t
}

/// Truncated Poisson series of the pure-register fringe, summed term by term.
pub fn poisson_series(mean: f64, phase: f64, terms: usize) -> f64 {
    let mut p = (-mean).exp();
    let mut s = 0.0;
    for m in 0..terms {
        s += p * (m as f64 * phase).cos();
        p *= mean / (m + 1) as f64;
    }
    s
}

/// Single-cosine offset `theta` minimising `max |y_i - cos(k x_i + theta)|`
/// in the least-squares sense, by a dense scan plus golden refinement.
pub fn best_phase_offset(phases: &[f64], y: &[f64], k: f64) -> (f64, f64) {
    let cost = |th: f64| phases.iter().zip(y).map(|(x, v)| (v - (k * x + th).cos()).powi(2)).sum::<f64>();
    let mut best = (0.0, f64::INFINITY);
    for i in 0..2000 {
        let th = -0.5 + i as f64 * 0.0005;
        let v = cost(th);
        if v < best.1 {
            best = (th, v);
        }
    }
    let (mut a, mut b) = (best.0 - 0.0005, best.0 + 0.0005);
    for _ in 0..100 {
        let m1 = a + (b - a) / 3.0;
        let m2 = b - (b - a) / 3.0;
        if cost(m1) < cost(m2) {
            b = m2;
        } else {
            a = m1;
        }
    }
    let th = 0.5 * (a + b);
    let max = phases.iter().zip(y).map(|(x, v)| (v - (k * x + th).cos()).abs()).fold(0.0, f64::max);
    (th, max)
}
