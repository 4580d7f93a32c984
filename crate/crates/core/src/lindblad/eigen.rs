//! Eigen-decomposition of small complex non-Hermitian matrices: Hessenberg
//! reduction followed by single-shift complex QR.

use nalgebra::{DMatrix, Hessenberg};
#[allow(unused_imports)]
use num_traits::Float;

use crate::C64;

const MAX_SWEEPS_PER_EIGENVALUE: usize = 60;

/// `A = V diag(lambda) V^-1`.
#[derive(Debug, Clone)]
pub(crate) struct Eigen {
    pub v: DMatrix<C64>,
    pub vinv: DMatrix<C64>,
    pub lambda: alloc::vec::Vec<C64>,
}

fn givens(a: C64, b: C64) -> (f64, C64) {
    let na = a.norm();
    let r = (na * na + b.norm_sqr()).sqrt();
    if r == 0.0 {
        return (1.0, C64::new(0.0, 0.0));
    }
    if na == 0.0 {
        return (0.0, C64::new(1.0, 0.0));
    }
    (na / r, (a / na) * b.conj() / r)
}

/// Complex Schur form `A = Z T Z^dagger`; `None` if QR fails to converge.
pub(crate) fn schur(a: DMatrix<C64>) -> Option<(DMatrix<C64>, DMatrix<C64>)> {
    let n = a.nrows();
    if n <= 1 {
        return Some((DMatrix::identity(n, n), a));
    }
    let (mut z, mut t) = Hessenberg::new(a).unpack();
    for j in 0..n {
        for i in j + 2..n {
            t[(i, j)] = C64::new(0.0, 0.0);
        }
    }
    let norm = t.iter().map(|x| x.norm()).fold(0.0, f64::max);
    let eps = f64::EPSILON;
    let mut hi = n - 1;
    let mut iter = 0usize;
    let mut total = 0usize;
    while hi > 0 {
        // Deflate negligible subdiagonals.
        let mut lo = hi;
        while lo > 0 {
            let s = t[(lo - 1, lo - 1)].norm() + t[(lo, lo)].norm();
            let s = if s == 0.0 { norm } else { s };
            if t[(lo, lo - 1)].norm() <= eps * s {
                t[(lo, lo - 1)] = C64::new(0.0, 0.0);
                break;
            }
            lo -= 1;
        }
        if lo == hi {
            hi -= 1;
            iter = 0;
            continue;
        }
        iter += 1;
        total += 1;
        if total > MAX_SWEEPS_PER_EIGENVALUE * n {
            return None;
        }
        // Wilkinson shift from the trailing 2x2, with occasional exceptional shifts.
        let mu = if iter % 11 == 10 {
            t[(hi, hi)] + C64::new(t[(hi, hi - 1)].norm() * 0.75, 0.0)
        } else {
            let (a, b, c, d) = (t[(hi - 1, hi - 1)], t[(hi - 1, hi)], t[(hi, hi - 1)], t[(hi, hi)]);
            let tr = (a + d) * 0.5;
            let disc = ((a - d) * 0.5 * ((a - d) * 0.5) + b * c).sqrt();
            let (l1, l2) = (tr + disc, tr - disc);
            if (l1 - d).norm() < (l2 - d).norm() {
                l1
            } else {
                l2
            }
        };
        for k in lo..=hi {
            t[(k, k)] -= mu;
        }
        let mut rots = alloc::vec::Vec::with_capacity(hi - lo);
        for k in lo..hi {
            let (c, s) = givens(t[(k, k)], t[(k + 1, k)]);
            for j in k..n {
                let (x, y) = (t[(k, j)], t[(k + 1, j)]);
                t[(k, j)] = x * c + s * y;
                t[(k + 1, j)] = -s.conj() * x + y * c;
            }
            rots.push((c, s));
        }
        for (off, &(c, s)) in rots.iter().enumerate() {
            let k = lo + off;
            for i in 0..=(k + 1).min(hi) {
                let (x, y) = (t[(i, k)], t[(i, k + 1)]);
                t[(i, k)] = x * c + y * s.conj();
                t[(i, k + 1)] = -x * s + y * c;
            }
            for i in 0..n {
                let (x, y) = (z[(i, k)], z[(i, k + 1)]);
                z[(i, k)] = x * c + y * s.conj();
                z[(i, k + 1)] = -x * s + y * c;
            }
        }
        for k in lo..=hi {
            t[(k, k)] += mu;
        }
    }
    Some((z, t))
}

/// Eigenvectors from the Schur form by back-substitution; nearly equal
/// eigenvalues are separated as in LAPACK's `trevc`.
pub(crate) fn eigen(a: DMatrix<C64>) -> Option<Eigen> {
    let n = a.nrows();
    let (z, t) = schur(a)?;
    let scale = t.iter().map(|x| x.norm()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let tiny = 1e-14 * scale;
    let mut x = DMatrix::<C64>::zeros(n, n);
    for i in 0..n {
        x[(i, i)] = C64::new(1.0, 0.0);
        for j in (0..i).rev() {
            let mut acc = C64::new(0.0, 0.0);
            for k in j + 1..=i {
                acc += t[(j, k)] * x[(k, i)];
            }
            let mut den = t[(j, j)] - t[(i, i)];
            if den.norm() < tiny {
                den = C64::new(tiny, 0.0);
            }
            x[(j, i)] = -acc / den;
        }
        let norm = x.column(i).norm();
        x.column_mut(i).unscale_mut(norm);
    }
    let v = z * x;
    let vinv = v.clone().lu().try_inverse()?;
    Some(Eigen { v, vinv, lambda: (0..n).map(|i| t[(i, i)]).collect() })
}
