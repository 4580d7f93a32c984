//! Closed-form model of the ideal protocol.
//!
//! Control and register qubits start in `(1+p)/2 |0><0| + (1-p)/2 |1><1|`.
//! After Hadamard, CNOT, the field interaction `exp(-i w t |1><1|)` on every
//! register qubit, CNOT and Hadamard, the joint outcome `(k, n)` (control in
//! `|k>`, `n` register qubits in `|1>`) has probability
//!
//! ```text
//! P(k, n) = C(N, n) ((1+p_R)/2)^(N-n) ((1-p_R)/2)^n * [1 + (-1)^k p_C cos((N-2n) w t)] / 2
//! ```
//!
//! Every control-only fringe in this crate is a mixture of cosines
//! `S(phi) = sum_k q_k cos(k phi)` over integer phase multiplicities `k`; the
//! distribution `q_k` is a [`PhaseSpectrum`].

use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{invalid, Error, Result};

/// Probability floor below which `1/P` terms are not evaluated directly.
pub const PROBABILITY_FLOOR: f64 = 1e-15;
/// Largest Poisson tail mass tolerated by a truncated average.
pub const POISSON_TAIL_TOLERANCE: f64 = 1e-12;

/// Purities of the control and of each register qubit.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct NoiseParams {
    pub p_c: f64,
    pub p_r: f64,
}

impl NoiseParams {
    pub fn new(p_c: f64, p_r: f64) -> Result<Self> {
        let n = Self { p_c, p_r };
        n.validate()?;
        Ok(n)
    }

    pub fn pure() -> Self {
        Self { p_c: 1.0, p_r: 1.0 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.p_c) {
            return Err(invalid("p_c", "must lie in [0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.p_r) {
            return Err(invalid("p_r", "must lie in [0, 1]"));
        }
        Ok(())
    }

    /// Populations `(P(|0>), P(|1>))` of the initial control qubit.
    pub fn control_populations(&self) -> (f64, f64) {
        ((1.0 + self.p_c) / 2.0, (1.0 - self.p_c) / 2.0)
    }

    /// Populations `(P(|0>), P(|1>))` of each initial register qubit.
    pub fn register_populations(&self) -> (f64, f64) {
        ((1.0 + self.p_r) / 2.0, (1.0 - self.p_r) / 2.0)
    }
}

/// Register size, coupling, interaction time and repetition count.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ProtocolConfig {
    pub n_r: usize,
    /// Unknown coupling (rad/s).
    pub omega: f64,
    /// Interaction time (s).
    pub t: f64,
    pub nu: u32,
}

impl ProtocolConfig {
    pub fn new(n_r: usize, omega: f64, t: f64, nu: u32) -> Result<Self> {
        let c = Self { n_r, omega, t, nu };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t >= 0.0) || !self.t.is_finite() {
            return Err(invalid("t", "must be finite and >= 0"));
        }
        if !self.omega.is_finite() {
            return Err(invalid("omega", "must be finite"));
        }
        if self.nu == 0 {
            return Err(invalid("nu", "must be >= 1"));
        }
        Ok(())
    }

    pub fn phase(&self) -> f64 {
        self.omega * self.t
    }
}

/// Joint outcome table `P(k, n)`, `k` in {0, 1}, `n` in `0..=n_r`.
#[derive(Debug, Clone, PartialEq)]
pub struct OutcomeDistribution {
    n_r: usize,
    probs: Vec<f64>,
}

impl OutcomeDistribution {
    pub fn n_r(&self) -> usize {
        self.n_r
    }

    pub fn get(&self, k: usize, n: usize) -> f64 {
        assert!(k < 2 && n <= self.n_r);
        self.probs[k * (self.n_r + 1) + n]
    }

    /// Flat view, control outcome major.
    pub fn as_slice(&self) -> &[f64] {
        &self.probs
    }

    pub fn total(&self) -> f64 {
        self.probs.iter().sum()
    }

    /// Marginal over the control outcome at fixed `n`.
    pub fn register_marginal(&self, n: usize) -> f64 {
        self.get(0, n) + self.get(1, n)
    }

    pub fn control_marginals(&self) -> (f64, f64) {
        let m = self.n_r + 1;
        (self.probs[..m].iter().sum(), self.probs[m..].iter().sum())
    }
}

/// `C(n, k)` as a float, exact for the sizes used here.
pub fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    let mut c = 1.0;
    for i in 0..k {
        c = c * (n - i) as f64 / (i + 1) as f64;
    }
    c
}

/// Binomial-mixture weights of having `n` register qubits in `|1>`.
pub fn register_weights(n_r: usize, p_r: f64) -> Vec<f64> {
    let a = (1.0 + p_r) / 2.0;
    let b = (1.0 - p_r) / 2.0;
    (0..=n_r)
        .map(|n| binomial(n_r, n) * a.powi((n_r - n) as i32) * b.powi(n as i32))
        .collect()
}

pub fn outcome_probabilities(cfg: &ProtocolConfig, noise: &NoiseParams) -> Result<OutcomeDistribution> {
    cfg.validate()?;
    noise.validate()?;
    let w = register_weights(cfg.n_r, noise.p_r);
    let phase = cfg.phase();
    let m = cfg.n_r + 1;
    let mut probs = vec![0.0; 2 * m];
    for (n, &wn) in w.iter().enumerate() {
        let c = ((cfg.n_r as f64 - 2.0 * n as f64) * phase).cos();
        probs[n] = wn * (1.0 + noise.p_c * c) / 2.0;
        probs[m + n] = wn * (1.0 - noise.p_c * c) / 2.0;
    }
    Ok(OutcomeDistribution { n_r: cfg.n_r, probs })
}

/// Control-only outcome probabilities `(P0, P1)`.
pub fn control_marginals(cfg: &ProtocolConfig, noise: &NoiseParams) -> Result<(f64, f64)> {
    Ok(outcome_probabilities(cfg, noise)?.control_marginals())
}

/// Ideal Fisher information with a pure control and all outcomes measured.
pub fn fisher_closed_form(n_r: usize, p_r: f64, t: f64) -> f64 {
    let n = n_r as f64;
    let p2 = p_r * p_r;
    ((1.0 - p2) * n + p2 * n * n) * t * t
}

/// Per-run sensitivity `1 / (w sqrt(nu F))`.
pub fn sensitivity(fisher: f64, nu: u32, omega: f64) -> Result<f64> {
    if nu == 0 {
        return Err(invalid("nu", "must be >= 1"));
    }
    if omega == 0.0 {
        return Err(invalid("omega", "must be non-zero"));
    }
    if !(fisher >= 0.0) {
        return Err(invalid("fisher", "must be >= 0"));
    }
    if fisher == 0.0 {
        return Err(Error::NonInformative);
    }
    Ok(1.0 / (omega.abs() * (nu as f64 * fisher).sqrt()))
}

/// Poisson probabilities `e^-m m^k / k!` for `k = 0..=max_k`.
pub fn poisson_pmf(mean: f64, max_k: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(max_k + 1);
    let mut p = (-mean).exp();
    for k in 0..=max_k {
        out.push(p);
        p *= mean / (k + 1) as f64;
    }
    out
}

/// Default truncation `m <= mean + 12 sqrt(mean)`, never below 30 terms.
pub fn default_poisson_truncation(mean: f64) -> usize {
    let m = (mean + 12.0 * mean.sqrt()).ceil() as usize;
    m.max(30)
}

/// Poisson tail mass beyond `max_k`.
pub fn poisson_tail(mean: f64, max_k: usize) -> f64 {
    let s: f64 = poisson_pmf(mean, max_k).iter().sum();
    (1.0 - s).max(0.0)
}

/// `sum_m Pois(m; mean) fringe(m)`, truncated at `truncation` (or the default).
pub fn poisson_average<F>(mean: f64, fringe: F, truncation: Option<usize>) -> Result<f64>
where
    F: Fn(usize) -> f64,
{
    if !(mean >= 0.0) || !mean.is_finite() {
        return Err(invalid("mean", "must be finite and >= 0"));
    }
    let max_m = truncation.unwrap_or_else(|| default_poisson_truncation(mean));
    let pmf = poisson_pmf(mean, max_m);
    let tail = (1.0 - pmf.iter().sum::<f64>()).max(0.0);
    if tail >= POISSON_TAIL_TOLERANCE {
        return Err(Error::InsufficientTruncation { max_m, tail });
    }
    Ok(pmf.iter().enumerate().map(|(m, p)| p * fringe(m)).sum())
}

/// Closed-form Poisson average of the pure-register GHZ fringe,
/// `(1/2 + c/2, 1/2 - c/2)` with `c = exp(mean (cos phi - 1)) cos(mean sin phi)`.
pub fn poisson_pure_fringe(mean: f64, phase: f64) -> (f64, f64) {
    let c = (mean * (phase.cos() - 1.0)).exp() * (mean * phase.sin()).cos();
    (0.5 + 0.5 * c, 0.5 - 0.5 * c)
}

/// Distribution of the fringe multiplicity `k = N - 2n` over register
/// configurations (and, optionally, Poisson-loaded register sizes).
///
/// Stored for `k = -k_max..=k_max`; the control fringe is
/// `P0 = (1 + p_C S(phi)) / 2` with `S(phi) = sum_k q_k cos(k phi)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseSpectrum {
    k_max: usize,
    weights: Vec<f64>,
}

impl PhaseSpectrum {
    /// Fixed register size.
    pub fn fixed(n_r: usize, p_r: f64) -> Self {
        let mut weights = vec![0.0; 2 * n_r + 1];
        for (n, w) in register_weights(n_r, p_r).into_iter().enumerate() {
            let k = n_r as isize - 2 * n as isize;
            weights[(k + n_r as isize) as usize] += w;
        }
        Self { k_max: n_r, weights }
    }

    /// Poisson-loaded register with the given mean.
    pub fn poisson(mean: f64, p_r: f64, truncation: Option<usize>) -> Result<Self> {
        if !(mean >= 0.0) || !mean.is_finite() {
            return Err(invalid("mean", "must be finite and >= 0"));
        }
        let max_m = truncation.unwrap_or_else(|| default_poisson_truncation(mean));
        let pmf = poisson_pmf(mean, max_m);
        let tail = (1.0 - pmf.iter().sum::<f64>()).max(0.0);
        if tail >= POISSON_TAIL_TOLERANCE {
            return Err(Error::InsufficientTruncation { max_m, tail });
        }
        let mut weights = vec![0.0; 2 * max_m + 1];
        for (m, pm) in pmf.iter().enumerate() {
            for (n, w) in register_weights(m, p_r).into_iter().enumerate() {
                let k = m as isize - 2 * n as isize;
                weights[(k + max_m as isize) as usize] += pm * w;
            }
        }
        Ok(Self { k_max: max_m, weights })
    }

    pub fn k_max(&self) -> usize {
        self.k_max
    }

    /// `(k, q_k)` pairs with non-zero weight.
    pub fn iter(&self) -> impl Iterator<Item = (isize, f64)> + '_ {
        let off = self.k_max as isize;
        self.weights
            .iter()
            .enumerate()
            .filter(|(_, &w)| w != 0.0)
            .map(move |(i, &w)| (i as isize - off, w))
    }

    pub fn total(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// `sum q_k k^2`, the Fisher information per `t^2` at a perfect fringe extremum.
    pub fn second_moment(&self) -> f64 {
        self.iter().map(|(k, q)| q * (k * k) as f64).sum()
    }

    /// `(S, dS/dphi, d2S/dphi2)` at `phi`.
    pub fn signal(&self, phi: f64) -> (f64, f64, f64) {
        let mut s = 0.0;
        let mut ds = 0.0;
        let mut d2s = 0.0;
        for (k, q) in self.iter() {
            let k = k as f64;
            let (sn, cs) = (k * phi).sin_cos();
            s += q * cs;
            ds -= q * k * sn;
            d2s -= q * k * k * cs;
        }
        (s, ds, d2s)
    }
}

/// A one-parameter family of outcome distributions `P_i(w)`.
pub trait ProbabilityFamily {
    fn outcomes(&self) -> usize;

    fn probabilities(&self, omega: f64, out: &mut [f64]);

    /// Exact first and second derivatives in `w`, when available.
    fn derivatives(&self, _omega: f64, _d1: &mut [f64], _d2: &mut [f64]) -> bool {
        false
    }
}

/// Result of a Fisher-information evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FisherEstimate {
    pub value: f64,
    /// Value from the analytic derivative, if the family supplies one.
    pub analytic: Option<f64>,
    /// Outcomes dropped because `P` fell below the floor and no analytic
    /// limit was available.
    pub excluded: usize,
    /// Outcomes below the floor replaced by the `2 P''` limit.
    pub limit_terms: usize,
}

impl FisherEstimate {
    /// Relative disagreement between finite differences and the analytic route.
    pub fn cross_check(&self) -> Option<f64> {
        self.analytic
            .map(|a| (self.value - a).abs() / a.abs().max(f64::MIN_POSITIVE))
    }
}

/// Central-difference step used for `dP/dw`.
pub fn fd_step(omega: f64) -> f64 {
    (1e-6 * omega.abs()).max(1e-9)
}

/// Fisher information `sum_i (dP_i/dw)^2 / P_i` by central differences, with an
/// analytic cross-check when the family provides derivatives.
pub fn fisher_information<F: ProbabilityFamily + ?Sized>(family: &F, omega: f64) -> Result<FisherEstimate> {
    let n = family.outcomes();
    let mut p = vec![0.0; n];
    let mut pp = vec![0.0; n];
    let mut pm = vec![0.0; n];
    let mut d1 = vec![0.0; n];
    let mut d2 = vec![0.0; n];
    family.probabilities(omega, &mut p);
    let h = fd_step(omega);
    family.probabilities(omega + h, &mut pp);
    family.probabilities(omega - h, &mut pm);
    let analytic = family.derivatives(omega, &mut d1, &mut d2);

    if p.iter().all(|&x| x < PROBABILITY_FLOOR) {
        return Err(Error::DegenerateDistribution { floor: PROBABILITY_FLOOR });
    }

    let mut value = 0.0;
    let mut exact = 0.0;
    let mut excluded = 0;
    let mut limit_terms = 0;
    for i in 0..n {
        if p[i] >= PROBABILITY_FLOOR {
            let dp = (pp[i] - pm[i]) / (2.0 * h);
            value += dp * dp / p[i];
            if analytic {
                exact += d1[i] * d1[i] / p[i];
            }
        } else if analytic {
            // P ~ P''(w - w*)^2 / 2 near a stationary zero, so (P')^2/P -> 2 P''.
            let lim = 2.0 * d2[i].max(0.0);
            value += lim;
            exact += lim;
            limit_terms += 1;
        } else {
            excluded += 1;
        }
    }
    Ok(FisherEstimate { value, analytic: analytic.then_some(exact), excluded, limit_terms })
}

/// Full joint distribution `P(k, n)` as a function of `w`.
#[derive(Debug, Clone)]
pub struct JointFamily {
    pub n_r: usize,
    pub noise: NoiseParams,
    pub t: f64,
    weights: Vec<f64>,
}

impl JointFamily {
    pub fn new(n_r: usize, noise: NoiseParams, t: f64) -> Self {
        Self { n_r, noise, t, weights: register_weights(n_r, noise.p_r) }
    }
}

impl ProbabilityFamily for JointFamily {
    fn outcomes(&self) -> usize {
        2 * (self.n_r + 1)
    }

    fn probabilities(&self, omega: f64, out: &mut [f64]) {
        let m = self.n_r + 1;
        for (n, &w) in self.weights.iter().enumerate() {
            let c = ((self.n_r as f64 - 2.0 * n as f64) * omega * self.t).cos();
            out[n] = w * (1.0 + self.noise.p_c * c) / 2.0;
            out[m + n] = w * (1.0 - self.noise.p_c * c) / 2.0;
        }
    }

    fn derivatives(&self, omega: f64, d1: &mut [f64], d2: &mut [f64]) -> bool {
        let m = self.n_r + 1;
        for (n, &w) in self.weights.iter().enumerate() {
            let kt = (self.n_r as f64 - 2.0 * n as f64) * self.t;
            let (s, c) = (kt * omega).sin_cos();
            let a = w * self.noise.p_c / 2.0;
            d1[n] = -a * kt * s;
            d1[m + n] = a * kt * s;
            d2[n] = -a * kt * kt * c;
            d2[m + n] = a * kt * kt * c;
        }
        true
    }
}

/// Control-only outcomes `(P0, P1)` for an arbitrary [`PhaseSpectrum`].
#[derive(Debug, Clone)]
pub struct ControlFamily {
    pub spectrum: PhaseSpectrum,
    pub p_c: f64,
    pub t: f64,
}

impl ControlFamily {
    pub fn fixed(n_r: usize, noise: NoiseParams, t: f64) -> Self {
        Self { spectrum: PhaseSpectrum::fixed(n_r, noise.p_r), p_c: noise.p_c, t }
    }

    pub fn poisson(mean: f64, noise: NoiseParams, t: f64) -> Result<Self> {
        Ok(Self { spectrum: PhaseSpectrum::poisson(mean, noise.p_r, None)?, p_c: noise.p_c, t })
    }

    /// `<sigma_Z> = P0 - P1`.
    pub fn sigma_z(&self, omega: f64) -> f64 {
        self.p_c * self.spectrum.signal(omega * self.t).0
    }

    /// Closed-form control-only Fisher information at `w`, using the `2 P''`
    /// limit at perfect extinction.
    pub fn fisher(&self, omega: f64) -> f64 {
        let (s, ds, d2s) = self.spectrum.signal(omega * self.t);
        let z = self.p_c * s;
        let dz = self.p_c * ds * self.t;
        let denom = 1.0 - z * z;
        if denom > 4.0 * PROBABILITY_FLOOR {
            dz * dz / denom
        } else {
            // z -> +-1 only when p_c = 1; F -> -z * d2z (= sum q k^2 t^2 at phi = 0).
            (-(z.signum()) * self.p_c * d2s * self.t * self.t).max(0.0)
        }
    }
}

impl ControlFamily {
    /// Largest control-only Fisher information over one period of `w t`,
    /// as `(w t, F)`. A dense grid on `[0, pi]` (the fringe is even) is
    /// refined by golden section around the best node.
    pub fn best_operating_point(&self) -> (f64, f64) {
        const NODES: usize = 4001;
        let f = |phi: f64| self.fisher(phi / self.t);
        let step = core::f64::consts::PI / (NODES - 1) as f64;
        let (mut best, mut best_f) = (0.0, f(0.0));
        for i in 1..NODES {
            let phi = step * i as f64;
            let v = f(phi);
            if v > best_f {
                best = phi;
                best_f = v;
            }
        }
        let (mut a, mut b) = ((best - step).max(0.0), best + step);
        let g = (5.0f64.sqrt() - 1.0) / 2.0;
        for _ in 0..80 {
            let c = b - g * (b - a);
            let d = a + g * (b - a);
            if f(c) >= f(d) {
                b = d;
            } else {
                a = c;
            }
        }
        let phi = 0.5 * (a + b);
        let v = f(phi);
        if v > best_f {
            (phi, v)
        } else {
            (best, best_f)
        }
    }
}

/// Smallest register purity at which a Poisson-loaded register (mean
/// `mean`), read out on the control alone at its best operating point,
/// matches the Fisher information `mean t^2` of `mean` pure independent
/// qubits.
pub fn purity_crossover(mean: f64, p_c: f64, t: f64) -> Result<f64> {
    if !(mean > 0.0) || !(t > 0.0) {
        return Err(invalid("purity_crossover", "need mean > 0 and t > 0"));
    }
    let target = mean * t * t;
    let excess = |p_r: f64| -> Result<f64> {
        let fam = ControlFamily::poisson(mean, NoiseParams::new(p_c, p_r)?, t)?;
        Ok(fam.best_operating_point().1 / target - 1.0)
    };
    const MATCH: f64 = 1e-9;
    if excess(0.0)? >= -MATCH {
        return Ok(0.0);
    }
    if excess(1.0)? < 0.0 {
        return Err(Error::NonInformative);
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    while hi - lo > 1e-6 {
        let mid = 0.5 * (lo + hi);
        if excess(mid)? >= -MATCH {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

impl ProbabilityFamily for ControlFamily {
    fn outcomes(&self) -> usize {
        2
    }

    fn probabilities(&self, omega: f64, out: &mut [f64]) {
        let z = self.sigma_z(omega);
        out[0] = (1.0 + z) / 2.0;
        out[1] = (1.0 - z) / 2.0;
    }

    fn derivatives(&self, omega: f64, d1: &mut [f64], d2: &mut [f64]) -> bool {
        let (_, ds, d2s) = self.spectrum.signal(omega * self.t);
        let a = self.p_c / 2.0;
        d1[0] = a * ds * self.t;
        d1[1] = -d1[0];
        d2[0] = a * d2s * self.t * self.t;
        d2[1] = -d2[0];
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use core::f64::consts::PI;

    fn cfg(n_r: usize, phase: f64) -> ProtocolConfig {
        ProtocolConfig::new(n_r, phase, 1.0, 1).unwrap()
    }

    #[test]
    fn identity_evolution_on_pure_state() {
        let d = outcome_probabilities(&cfg(1, 0.0), &NoiseParams::pure()).unwrap();
        assert_eq!(d.get(0, 0), 1.0);
        assert_eq!(d.get(0, 1), 0.0);
        assert_eq!(d.get(1, 0), 0.0);
        assert_eq!(d.get(1, 1), 0.0);
    }

    #[test]
    fn two_mixed_registers_at_quarter_turn() {
        let noise = NoiseParams::new(1.0, 0.0).unwrap();
        let d = outcome_probabilities(&cfg(2, PI / 2.0), &noise).unwrap();
        // n = 0, 2: cos(+-pi) = -1; n = 1: cos 0 = 1.
        assert!((d.get(0, 0) - 0.0).abs() < 1e-15);
        assert!((d.get(1, 0) - 0.25).abs() < 1e-15);
        assert!((d.get(0, 1) - 0.5).abs() < 1e-15);
        assert!((d.get(1, 1) - 0.0).abs() < 1e-15);
        assert!((d.get(1, 2) - 0.25).abs() < 1e-15);
        for n in 0..=2 {
            assert!((d.register_marginal(n) - binomial(2, n) / 4.0).abs() < 1e-15);
        }
    }

    #[test]
    fn ghz_limit_marginals() {
        for n_r in 0..8 {
            for &ph in &[0.0, 0.3, 1.1, 2.9] {
                let (p0, p1) = control_marginals(&cfg(n_r, ph), &NoiseParams::pure()).unwrap();
                let c = (n_r as f64 * ph).cos();
                assert!((p0 - (1.0 + c) / 2.0).abs() < 1e-14);
                assert!((p1 - (1.0 - c) / 2.0).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn dephased_control_carries_no_signal() {
        let noise = NoiseParams::new(0.0, 0.7).unwrap();
        for &ph in &[0.0, 0.4, 2.0] {
            let (p0, p1) = control_marginals(&cfg(5, ph), &noise).unwrap();
            assert!((p0 - 0.5).abs() < 1e-15 && (p1 - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn closed_form_limits_and_plugin() {
        assert_eq!(fisher_closed_form(25, 1.0, 1.0), 625.0);
        assert_eq!(fisher_closed_form(25, 0.0, 1.0), 25.0);
        let f = fisher_closed_form(25, 0.95, 375e-6);
        // (0.0975 * 25 + 0.9025 * 625) * (375e-6)^2
        let expect = (0.0975 * 25.0 + 0.9025 * 625.0) * 375e-6 * 375e-6;
        assert!((f - expect).abs() / expect < 1e-14);
        assert!((f - 7.966e-5).abs() < 5e-8);
    }

    #[test]
    fn sensitivity_values() {
        let t = 1.0;
        let s = sensitivity(25.0 * t * t, 1, 4.0 * PI).unwrap();
        assert!((s - 1.0 / (4.0 * PI * 5.0)).abs() < 1e-15);
        assert!((s - 15.9e-3).abs() < 1e-4);
        assert!((sensitivity(1.0, 100, 1.0).unwrap() - 0.1).abs() < 1e-15);
        let a = sensitivity(3.0, 10, 2.0).unwrap();
        let b = sensitivity(3.0, 20, 2.0).unwrap();
        assert!((a / b - 2f64.sqrt()).abs() < 1e-14);
        assert_eq!(sensitivity(0.0, 1, 1.0), Err(Error::NonInformative));
        assert!(sensitivity(1.0, 0, 1.0).is_err());
    }

    #[test]
    fn single_qubit_cosine_family_has_t_squared_fisher() {
        let fam = ControlFamily::fixed(1, NoiseParams::pure(), 0.7);
        for &w in &[0.3, 1.0, 2.5] {
            let f = fisher_information(&fam, w).unwrap();
            assert!((f.value - 0.49).abs() < 1e-7, "{f:?}");
            assert!((f.analytic.unwrap() - 0.49).abs() < 1e-12);
        }
    }

    #[test]
    fn fully_mixed_control_fisher_vanishes() {
        let fam = ControlFamily::fixed(4, NoiseParams::new(0.0, 0.8).unwrap(), 1.0);
        let f = fisher_information(&fam, 0.77).unwrap();
        assert_eq!(f.value, 0.0);
        assert_eq!(fam.fisher(0.77), 0.0);
    }

    #[test]
    fn joint_fisher_matches_closed_form() {
        for n_r in 1..=6 {
            for &p_r in &[0.0, 0.5, 1.0] {
                let fam = JointFamily::new(n_r, NoiseParams::new(1.0, p_r).unwrap(), 1.0);
                let f = fisher_information(&fam, 0.37).unwrap();
                let exact = fisher_closed_form(n_r, p_r, 1.0);
                assert!((f.value - exact).abs() / exact < 1e-8, "{n_r} {p_r} {f:?}");
            }
        }
    }

    #[test]
    fn degenerate_family_is_reported() {
        struct Zero;
        impl ProbabilityFamily for Zero {
            fn outcomes(&self) -> usize {
                2
            }
            fn probabilities(&self, _: f64, out: &mut [f64]) {
                out.fill(0.0);
            }
        }
        assert!(matches!(fisher_information(&Zero, 1.0), Err(Error::DegenerateDistribution { .. })));
    }

    #[test]
    fn poisson_pure_fringe_special_points() {
        for &mean in &[0.5, 5.0, 25.0] {
            let (a, b) = poisson_pure_fringe(mean, 0.0);
            assert!((a - 1.0).abs() < 1e-15 && b.abs() < 1e-15);
            let (a, _) = poisson_pure_fringe(mean, 2.0 * PI);
            assert!((a - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn poisson_average_needs_enough_terms() {
        let r = poisson_average(25.0, |_| 1.0, Some(30));
        assert!(matches!(r, Err(Error::InsufficientTruncation { .. })));
        let v = poisson_average(25.0, |_| 1.0, None).unwrap();
        assert!((v - 1.0).abs() < 1e-12);
    }

    #[test]
    fn spectrum_second_moment() {
        // Poisson: N + p^2 N^2 (extra p^2 N from the Poisson variance).
        let s = PhaseSpectrum::poisson(25.0, 0.3, None).unwrap();
        assert!((s.second_moment() - (25.0 + 0.09 * 625.0)).abs() < 1e-8);
        let s = PhaseSpectrum::fixed(7, 0.4);
        assert!((s.second_moment() - fisher_closed_form(7, 0.4, 1.0)).abs() < 1e-12);
        assert!((s.total() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn control_fisher_at_extinction_uses_limit() {
        let fam = ControlFamily::fixed(5, NoiseParams::new(1.0, 0.6).unwrap(), 1.0);
        assert!((fam.fisher(0.0) - fisher_closed_form(5, 0.6, 1.0)).abs() < 1e-12);
        let f = fisher_information(&fam, 0.0).unwrap();
        assert_eq!(f.limit_terms, 1);
    }

    #[test]
    fn crossover_with_an_imperfect_control() {
        // p_C < 1 keeps the fringe off extinction, so some register purity
        // is needed before the control beats independent qubits.
        let p = purity_crossover(25.0, 0.99, 1e-3).unwrap();
        assert!(p > 0.05 && p < 0.15, "{p}");
        assert_eq!(purity_crossover(25.0, 1.0, 1e-3).unwrap(), 0.0);
    }

    #[test]
    fn invalid_inputs_rejected() {
        assert!(NoiseParams::new(1.2, 0.5).is_err());
        assert!(NoiseParams::new(0.5, -0.1).is_err());
        assert!(ProtocolConfig::new(3, 1.0, -1.0, 1).is_err());
        assert!(ProtocolConfig::new(3, 1.0, 1.0, 0).is_err());
    }
}
