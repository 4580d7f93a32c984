//! Fringe fits, Fisher information of the fitted two-outcome model, shot-noise
//! sensitivities and the adaptive operating point.

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
#[allow(unused_imports)]
use num_traits::Float;

use crate::analytic::PhaseSpectrum;
use crate::error::{invalid, Error, Result};
use crate::experiment::FringeDataset;

/// Fringe shape `<sigma_Z>(w) = C sum_k q_k cos(k w t + phi)`.
#[derive(Debug, Clone, PartialEq)]
pub enum FringeModel {
    /// `q_{n_eff} = 1`.
    Cosine { n_eff: f64 },
    /// Multiplicity weights of a fixed or Poisson-loaded register.
    PoissonEnvelope { spectrum: PhaseSpectrum },
}

impl FringeModel {
    /// `(sum q_k cos(k phi), sum q_k sin(k phi))` and their `phi`-derivatives.
    fn basis(&self, phi: f64) -> ([f64; 2], [f64; 2]) {
        match self {
            FringeModel::Cosine { n_eff } => {
                let (s, c) = (n_eff * phi).sin_cos();
                ([c, s], [-n_eff * s, n_eff * c])
            }
            FringeModel::PoissonEnvelope { spectrum } => {
                let mut v = [0.0; 2];
                let mut d = [0.0; 2];
                for (k, q) in spectrum.iter() {
                    let k = k as f64;
                    let (s, c) = (k * phi).sin_cos();
                    v[0] += q * c;
                    v[1] += q * s;
                    d[0] -= q * k * s;
                    d[1] += q * k * c;
                }
                (v, d)
            }
        }
    }

    /// Typical fringe frequency in units of `w t`.
    fn scale(&self) -> f64 {
        match self {
            FringeModel::Cosine { n_eff } => n_eff.abs().max(1.0),
            FringeModel::PoissonEnvelope { spectrum } => spectrum.second_moment().sqrt().max(1.0),
        }
    }
}

/// Fitted fringe. `contrast >= 0`; `phase` in `(-pi, pi]`.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct FringeFit {
    pub contrast: f64,
    pub phase: f64,
    /// Fringe maximum nearest the reference frequency (rad/s).
    pub center: f64,
    /// RMS residual.
    pub residual: f64,
    pub contrast_stderr: f64,
    /// Contrast not resolved from zero (below two standard errors).
    pub uncertain: bool,
    pub iterations: usize,
    #[serde(skip)]
    pub model: FringeModel,
    /// Evolution time (s).
    pub t: f64,
}

impl FringeFit {
    pub fn sigma_z(&self, omega: f64) -> f64 {
        let (v, _) = self.model.basis(omega * self.t);
        let (s, c) = self.phase.sin_cos();
        self.contrast * (c * v[0] - s * v[1])
    }

    /// `d<sigma_Z>/dw`.
    pub fn slope(&self, omega: f64) -> f64 {
        let (_, d) = self.model.basis(omega * self.t);
        let (s, c) = self.phase.sin_cos();
        self.contrast * (c * d[0] - s * d[1]) * self.t
    }
}

fn wrap(phi: f64) -> f64 {
    let two_pi = 2.0 * core::f64::consts::PI;
    let mut p = phi % two_pi;
    if p <= -core::f64::consts::PI {
        p += two_pi;
    } else if p > core::f64::consts::PI {
        p -= two_pi;
    }
    p
}

const LM_MAX_ITERATIONS: usize = 200;

/// Damped Gauss-Newton minimisation of `sum r_i(p)^2`; returns the parameters,
/// the Jacobian at the solution and the iteration count.
pub fn levenberg_marquardt<F>(residuals: F, p0: &[f64]) -> Result<(Vec<f64>, DMatrix<f64>, usize)>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let np = p0.len();
    let initial = {
        let mut a = [0.0; 3];
        for (x, y) in a.iter_mut().zip(p0) {
            *x = *y;
        }
        a
    };
    let jac = |p: &[f64], r0: &[f64]| {
        let mut j = DMatrix::zeros(r0.len(), np);
        let mut q = p.to_vec();
        for c in 0..np {
            let h = 1e-7 * p[c].abs().max(1e-3);
            q[c] = p[c] + h;
            let r1 = residuals(&q);
            q[c] = p[c];
            for i in 0..r0.len() {
                j[(i, c)] = (r1[i] - r0[i]) / h;
            }
        }
        j
    };
    let cost = |r: &[f64]| r.iter().map(|x| x * x).sum::<f64>();
    let mut p = p0.to_vec();
    let mut r = residuals(&p);
    let mut c0 = cost(&r);
    if !c0.is_finite() {
        return Err(Error::FitNonConvergence { iterations: 0, initial });
    }
    let mut lambda = 1e-3;
    for it in 1..=LM_MAX_ITERATIONS {
        let j = jac(&p, &r);
        let jt = j.transpose();
        let g = &jt * DVector::from_column_slice(&r);
        let a = &jt * &j;
        if g.amax() <= 1e-15 * (1.0 + c0) {
            return Ok((p, j, it));
        }
        loop {
            let mut m = a.clone();
            for d in 0..np {
                m[(d, d)] += lambda * a[(d, d)].max(1e-12);
            }
            let step = match m.lu().solve(&(-&g)) {
                Some(s) => s,
                None => {
                    lambda *= 10.0;
                    if lambda > 1e12 {
                        return Err(Error::FitNonConvergence { iterations: it, initial });
                    }
                    continue;
                }
            };
            let trial: Vec<f64> = p.iter().zip(step.iter()).map(|(x, d)| x + d).collect();
            let rt = residuals(&trial);
            let ct = cost(&rt);
            if ct.is_finite() && ct <= c0 {
                let small = step.iter().zip(&p).all(|(d, x)| d.abs() <= 1e-12 * (x.abs() + 1e-12));
                let flat = c0 - ct <= 1e-15 * c0.max(f64::MIN_POSITIVE);
                p = trial;
                r = rt;
                c0 = ct;
                lambda = (lambda / 10.0).max(1e-15);
                if small || flat {
                    let j = jac(&p, &r);
                    return Ok((p, j, it));
                }
                break;
            }
            lambda *= 10.0;
            if lambda > 1e12 {
                // No descent direction left: at a minimum to working precision.
                let j = jac(&p, &r);
                return Ok((p, j, it));
            }
        }
    }
    Err(Error::FitNonConvergence { iterations: LM_MAX_ITERATIONS, initial })
}

/// Least-squares fit of `(omega_i, sigma_i)` to `model` at evolution time `t`.
/// `reference` is the frequency around which the fringe centre is reported.
pub fn fit_points(omega: &[f64], sigma: &[f64], t: f64, model: FringeModel, reference: f64) -> Result<FringeFit> {
    const MIN_POINTS: usize = 5;
    if omega.len() != sigma.len() {
        return Err(invalid("sigma", "length differs from the frequency grid"));
    }
    if omega.len() < MIN_POINTS {
        return Err(Error::NotEnoughPoints { need: MIN_POINTS, have: omega.len() });
    }
    if !(t > 0.0) {
        return Err(invalid("t", "must be > 0"));
    }
    let bases: Vec<[f64; 2]> = omega.iter().map(|w| model.basis(w * t).0).collect();
    let resid = |p: &[f64]| -> Vec<f64> {
        let (s, c) = p[1].sin_cos();
        bases.iter().zip(sigma).map(|(b, y)| p[0] * (c * b[0] - s * b[1]) - y).collect()
    };

    // Contrast from the peak-to-peak spread, phase from the first zero crossing.
    let (lo, hi) = sigma.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &y| (a.min(y), b.max(y)));
    let c_guess = (0.5 * (hi - lo)).max(0.5 * hi.abs().max(lo.abs())).clamp(1e-3, 1.0);
    let cost_at = |phi: f64| resid(&[c_guess, phi]).iter().map(|x| x * x).sum::<f64>();
    let mut phi_guess = None;
    if let FringeModel::Cosine { n_eff } = model {
        for i in 0..sigma.len() - 1 {
            if sigma[i] == 0.0 || sigma[i] * sigma[i + 1] < 0.0 {
                let f = if sigma[i] == 0.0 { 0.0 } else { sigma[i] / (sigma[i] - sigma[i + 1]) };
                let wz = omega[i] + f * (omega[i + 1] - omega[i]);
                let rising = sigma[i + 1] > sigma[i];
                let half = core::f64::consts::FRAC_PI_2;
                // C cos(n w t + phi) rises through zero where the argument is -pi/2.
                phi_guess = Some(wrap(if rising { -half } else { half } - n_eff * wz * t));
                break;
            }
        }
    }
    let phi_guess = phi_guess.unwrap_or_else(|| {
        let grid = 72;
        (0..grid)
            .map(|i| -core::f64::consts::PI + 2.0 * core::f64::consts::PI * i as f64 / grid as f64)
            .min_by(|a, b| cost_at(*a).total_cmp(&cost_at(*b)))
            .unwrap_or(0.0)
    });

    let (p, j, iterations) = levenberg_marquardt(&resid, &[c_guess, phi_guess]).map_err(|e| match e {
        Error::FitNonConvergence { iterations, .. } => {
            Error::FitNonConvergence { iterations, initial: [c_guess, phi_guess, 0.0] }
        }
        other => other,
    })?;
    let (mut contrast, mut phase) = (p[0], p[1]);
    if contrast < 0.0 {
        contrast = -contrast;
        phase += core::f64::consts::PI;
    }
    let mut iterations = iterations;
    if contrast > 1.0 {
        // Contrast on its bound: refit the phase alone.
        let (q, _, it) = levenberg_marquardt(|x: &[f64]| resid(&[1.0, x[0]]), &[phase])?;
        contrast = 1.0;
        phase = q[0];
        iterations += it;
    }
    let phase = wrap(phase);
    let r = resid(&[contrast, phase]);
    let rss = r.iter().map(|x| x * x).sum::<f64>();
    let n = omega.len() as f64;
    let dof = (n - 2.0).max(1.0);
    let cov = (j.transpose() * &j).try_inverse();
    let contrast_stderr = cov.map_or(f64::INFINITY, |c| (c[(0, 0)].max(0.0) * rss / dof).sqrt());
    let mut fit = FringeFit {
        contrast,
        phase,
        center: reference,
        residual: (rss / n).sqrt(),
        contrast_stderr,
        uncertain: contrast < 2.0 * contrast_stderr,
        iterations,
        model,
        t,
    };
    fit.center = fringe_maximum(&fit, reference);
    Ok(fit)
}

/// Fit a dataset against `model`; frequencies are `omega_0 (1 + x)`.
pub fn fit_fringe(data: &FringeDataset, model: FringeModel) -> Result<FringeFit> {
    let cfg = &data.config;
    let omega: Vec<f64> = data.points.iter().map(|p| cfg.omega0 * (1.0 + p.delta_omega_over_omega0)).collect();
    fit_points(&omega, &data.sigma_z(), cfg.t, model, cfg.omega0)
}

/// Model matching a dataset: a single cosine at the register size, or the
/// Poisson envelope of the loaded register.
pub fn default_model(data: &FringeDataset, poisson: bool) -> Result<FringeModel> {
    let cfg = &data.config;
    Ok(if poisson {
        FringeModel::PoissonEnvelope { spectrum: PhaseSpectrum::poisson(cfg.mean_n_r, cfg.noise.p_r, None)? }
    } else {
        FringeModel::Cosine { n_eff: cfg.mean_n_r }
    })
}

/// Golden-section maximum of `f` on `[a, b]`.
fn golden_max<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64) -> f64 {
    let g = (5.0f64.sqrt() - 1.0) / 2.0;
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..200 {
        if (b - a).abs() <= 1e-13 * (a.abs() + b.abs()) {
            break;
        }
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

fn grid_then_refine<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, points: usize) -> (f64, f64) {
    let step = (hi - lo) / (points - 1) as f64;
    let (mut best, mut best_v) = (lo, f64::NEG_INFINITY);
    for i in 0..points {
        let x = lo + step * i as f64;
        let v = f(x);
        if v > best_v {
            best = x;
            best_v = v;
        }
    }
    let x = golden_max(&f, (best - step).max(lo), (best + step).min(hi));
    let v = f(x);
    if v >= best_v {
        (x, v)
    } else {
        (best, best_v)
    }
}

fn fringe_maximum(fit: &FringeFit, reference: f64) -> f64 {
    let half = core::f64::consts::PI / (fit.model.scale() * fit.t);
    grid_then_refine(|w| fit.sigma_z(w), reference - half, reference + half, 401).0
}

/// Fisher information of the fitted two-outcome model at `omega`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct FisherValue {
    pub value: f64,
    /// `omega` sits where the model slope vanishes, so the device is locally
    /// insensitive there.
    pub stationary: bool,
}

/// `F = (d sigma/dw)^2 / (1 - sigma^2)`, the Fisher information of
/// `P_{0,1} = (1 +- sigma) / 2`.
pub fn numerical_fisher(fit: &FringeFit, omega: f64) -> FisherValue {
    let s = fit.sigma_z(omega);
    let d = fit.slope(omega);
    let scale = fit.contrast * fit.model.scale() * fit.t;
    let stationary = d.abs() <= 1e-9 * scale.max(f64::MIN_POSITIVE);
    let denom = 1.0 - s * s;
    let value = if d == 0.0 {
        0.0
    } else if denom > 0.0 {
        d * d / denom
    } else {
        f64::INFINITY
    };
    FisherValue { value, stationary }
}

/// Shot-noise sensitivities per measurement.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct SensitivityReport {
    /// `1 / (w sqrt F)`.
    pub s_q: f64,
    /// `1 / (w t sqrt N)`.
    pub s_c: f64,
    pub ratio: f64,
    pub fisher: f64,
    pub omega: f64,
    /// Repetitions the sensitivities refer to; always 1 (per shot).
    pub shots: u32,
}

pub fn sensitivity_report(fisher: f64, omega: f64, t: f64, mean_n_r: f64) -> Result<SensitivityReport> {
    if !(fisher >= 0.0) {
        return Err(invalid("fisher", "must be >= 0"));
    }
    if !(omega != 0.0 && omega.is_finite()) || !(t > 0.0) || !(mean_n_r > 0.0) {
        return Err(invalid("sensitivity", "need w != 0, t > 0 and N > 0"));
    }
    if fisher == 0.0 {
        return Err(Error::NonInformative);
    }
    let s_q = 1.0 / (omega.abs() * fisher.sqrt());
    let s_c = 1.0 / (omega.abs() * t * mean_n_r.sqrt());
    Ok(SensitivityReport { s_q, s_c, ratio: s_c / s_q, fisher, omega, shots: 1 })
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct OperatingPoint {
    pub omega: f64,
    /// `w_ad`: shift from the guess to the operating point.
    pub offset: f64,
    pub fisher: f64,
}

/// Largest Fisher information within one fringe period of `omega_guess`.
pub fn operating_point(fit: &FringeFit, omega_guess: f64) -> Result<OperatingPoint> {
    if fit.contrast == 0.0 {
        return Err(Error::NonInformative);
    }
    let half = core::f64::consts::PI / (fit.model.scale() * fit.t);
    let f = |w: f64| {
        let v = numerical_fisher(fit, w);
        if v.stationary || !v.value.is_finite() {
            0.0
        } else {
            v.value
        }
    };
    let (omega, fisher) = grid_then_refine(f, omega_guess - half, omega_guess + half, 4001);
    if !(fisher > 0.0) {
        return Err(Error::NonInformative);
    }
    Ok(OperatingPoint { omega, offset: omega - omega_guess, fisher })
}

/// Fitted contrasts of several datasets with their mean.
pub fn mean_contrast(fits: &[FringeFit]) -> Option<f64> {
    if fits.is_empty() {
        return None;
    }
    Some(fits.iter().map(|f| f.contrast).sum::<f64>() / fits.len() as f64)
}

/// `mean ± standard error` of a sample.
pub fn mean_and_stderr(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    if x.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let m = x.iter().sum::<f64>() / n;
    if x.len() < 2 {
        return (m, f64::INFINITY);
    }
    let v = x.iter().map(|y| (y - m) * (y - m)).sum::<f64>() / (n - 1.0);
    (m, (v / n).sqrt())
}
