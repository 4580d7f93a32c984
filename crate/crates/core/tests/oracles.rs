mod common;

use qmetro_core::analytic::*;
use std::f64::consts::PI;

#[test]
fn outcome_table_matches_the_circuit() {
    let grid = [(1.0, 1.0, 0.3), (0.95, 0.95, 1.1), (0.5, 0.2, 2.0), (0.0, 0.7, 0.9), (0.8, 0.0, 4.0)];
    for n_r in 1..=4 {
        for &(p_c, p_r, phase) in &grid {
            let d = outcome_probabilities(&ProtocolConfig::new(n_r, phase, 1.0, 1).unwrap(), &NoiseParams::new(p_c, p_r).unwrap())
                .unwrap();
            let reference = common::circuit_probabilities(n_r, p_c, p_r, phase);
            for (a, b) in d.as_slice().iter().zip(&reference) {
                assert!((a - b).abs() <= 1e-9, "n={n_r} {p_c} {p_r} {phase}: {a} vs {b}");
            }
        }
    }
}

#[test]
fn joint_fisher_equals_the_closed_form() {
    let t = 1.3e-3;
    for n_r in 1..=10 {
        for p_r in [0.0, 0.3, 0.7, 0.95, 1.0] {
            let fam = JointFamily::new(n_r, NoiseParams::new(1.0, p_r).unwrap(), t);
            let omega = 0.37 / t;
            let f = fisher_information(&fam, omega).unwrap();
            let closed = fisher_closed_form(n_r, p_r, t);
            assert!((f.value / closed - 1.0).abs() <= 1e-8, "n={n_r} p={p_r}: {} vs {closed}", f.value);
            let reference = common::joint_fisher_reference(n_r, p_r, t);
            assert!((reference / closed - 1.0).abs() <= 1e-12);
        }
    }
}

#[test]
fn heisenberg_and_standard_limits() {
    let t = 2e-3;
    for n in 1..=20usize {
        let nf = n as f64;
        assert_eq!(fisher_closed_form(n, 1.0, t), nf * nf * t * t);
        assert_eq!(fisher_closed_form(n, 0.0, t), nf * t * t);
    }
}

#[test]
fn poisson_closed_form_matches_the_series() {
    for mean in [1.0, 5.0, 25.0] {
        let mut worst: f64 = 0.0;
        for i in 0..=400 {
            let phase = 4.0 * PI * i as f64 / 400.0;
            let closed = 2.0 * poisson_pure_fringe(mean, phase).0 - 1.0;
            let series = common::poisson_series(mean, phase, 200);
            let averaged = poisson_average(mean, |m| (m as f64 * phase).cos(), None).unwrap();
            worst = worst.max((closed - series).abs()).max((closed - averaged).abs());
        }
        assert!(worst <= 1e-10, "mean {mean}: {worst}");
    }
}

#[test]
fn control_marginals_are_the_spectrum_fringe() {
    let t = 1e-3;
    for (n_r, p_c, p_r) in [(3usize, 0.9, 0.6), (7, 1.0, 0.95)] {
        let fam = ControlFamily::fixed(n_r, NoiseParams::new(p_c, p_r).unwrap(), t);
        for w in [10.0, 777.0, 3000.0] {
            let (p0, p1) = control_marginals(&ProtocolConfig::new(n_r, w, t, 1).unwrap(), &NoiseParams::new(p_c, p_r).unwrap()).unwrap();
            assert!((fam.sigma_z(w) - (p0 - p1)).abs() < 1e-13);
        }
    }
}
