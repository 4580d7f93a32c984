mod common;

use qmetro_core::analytic::*;
use qmetro_core::experiment::*;
use qmetro_core::lindblad::*;

/// Dissipation off, Rydberg coupling strong enough for clean EIT, amplitude
/// calibrated and a control-register interaction deep in the blockade limit.
fn ideal_gate(mut cfg: ExperimentConfig) -> ExperimentConfig {
    cfg.gate.scheme.gamma_e = 0.0;
    cfg.gate.scheme.gamma_dph = 0.0;
    cfg.gate.register_interactions = false;
    cfg.gate.control_register.c_dd = 1e8;
    cfg.gate.pulses.omega3_scaled = true;
    let cal = calibrate_amplitude(&cfg.gate.scheme, &cfg.gate.pulses, (2.0, 3.0)).unwrap();
    cfg.gate.pulses.amplitude_scale = cal.amplitude_scale;
    cfg
}

#[test]
fn full_dynamics_is_deterministic_and_conserves_tallies() {
    let mut cfg = ExperimentConfig::full_dynamics(1, 1e4);
    cfg.nu = 5;
    cfg.scan = linspace(-0.25, 0.25, 7);
    cfg.gate.slices = 60;
    let a = run_full_protocol(&cfg).unwrap();
    let b = run_full_protocol(&cfg).unwrap();
    assert_eq!(a, b);
    a.check_tallies().unwrap();
    for p in &a.points {
        assert_eq!(p.n0 + p.n1 + p.losses, cfg.nu);
        assert!((-1.0..=1.0).contains(&p.sigma_z_mean));
    }
    cfg.seed += 1;
    assert_ne!(run_full_protocol(&cfg).unwrap().points, a.points);
}

#[test]
fn full_dynamics_rejects_large_registers() {
    let mut cfg = ExperimentConfig::full_dynamics(3, 0.0);
    cfg.mean_n_r = 5.0;
    assert!(run_full_protocol(&cfg).is_err());
    cfg.mean_n_r = 2.5;
    assert!(cfg.validate().is_err());
}

#[test]
fn ideal_full_dynamics_reproduces_the_analytic_fringe() {
    for n_r in 1..=2usize {
        let mut cfg = ideal_gate(ExperimentConfig::full_dynamics(n_r, 0.0));
        cfg.noise = NoiseParams::pure();
        cfg.probabilities_only = true;
        cfg.nu = 2;
        cfg.gate.slices = 200;
        let d = run_full_protocol(&cfg).unwrap();
        let phases: Vec<f64> = cfg.scan.iter().map(|&x| cfg.phase(x)).collect();
        let exact: Vec<f64> = d.points.iter().map(|p| p.sigma_z_exact).collect();
        // The EIT and blockaded branches pick up different light shifts: a
        // constant fringe offset, removed before comparing.
        let (theta, worst) = common::best_phase_offset(&phases, &exact, n_r as f64);
        assert!(worst <= 1e-3, "n={n_r}: offset {theta}, worst {worst}");
        for (p, &phi) in d.points.iter().zip(&phases) {
            let w = (phi + theta / n_r as f64) / cfg.t;
            let (p0, p1) = control_marginals(&ProtocolConfig::new(n_r, w, cfg.t, 1).unwrap(), &cfg.noise).unwrap();
            assert!((p.sigma_z_exact - (p0 - p1)).abs() <= 1e-3);
        }
    }
}

#[test]
fn two_ideal_gates_restore_the_register() {
    let cfg = ideal_gate(ExperimentConfig::full_dynamics(1, 0.0));
    let g = ControlledGate::single(cfg.gate.scheme, cfg.gate.pulses, 2.0 * std::f64::consts::PI * 1e12, SplitOptions { slices: 400 })
        .unwrap();
    let start = BlockState::initial(1, 0.0, 1.0);
    let mut s = start.clone();
    g.evolve(&mut s).unwrap();
    g.evolve(&mut s).unwrap();
    for (a, b) in [(&s.zz, &start.zz), (&s.rr, &start.rr)] {
        let fidelity = a[(0, 0)].re / b[(0, 0)].re;
        assert!(fidelity >= 1.0 - 1e-6, "{fidelity}");
    }
}

#[test]
fn dephasing_never_raises_the_contrast() {
    let mut last = f64::INFINITY;
    for lw in [0.0, 1e4, 3e4, 1e5] {
        let mut cfg = ExperimentConfig::full_dynamics(1, lw);
        cfg.probabilities_only = true;
        cfg.nu = 3;
        cfg.scan = vec![0.0];
        cfg.gate.slices = 100;
        let s = run_full_protocol(&cfg).unwrap().points[0].sigma_z_exact;
        assert!(s <= last + 1e-12, "{lw}: {s} > {last}");
        last = s;
    }
}

#[test]
fn gate_invariants_hold_over_a_run() {
    let mut cfg = ExperimentConfig::full_dynamics(2, 1e5);
    cfg.gate.slices = 100;
    let mut worst = InvariantReport { trace_error: 0.0, hermiticity_defect: 0.0, min_eigenvalue: 0.0 };
    for rep in 0..3 {
        worst.merge(&repetition_invariants(&cfg, rep, 1.3).unwrap());
    }
    worst.check(&InvariantTolerances::default()).unwrap();
}

#[test]
fn large_n_without_losses_is_the_poisson_fringe() {
    let mut cfg = ExperimentConfig::large_n(0.0);
    cfg.large_n.losses = false;
    cfg.probabilities_only = true;
    cfg.scan = linspace(-0.02, 0.02, 41);
    let model = GateContrastModel::perfect(cfg.noise.p_c);
    let d = run_large_n(&cfg, &model).unwrap();
    let fam = ControlFamily::poisson(cfg.mean_n_r, cfg.noise, cfg.t).unwrap();
    for p in &d.points {
        let w = cfg.omega0 * (1.0 + p.delta_omega_over_omega0);
        assert!((p.sigma_z_mean - fam.sigma_z(w)).abs() < 1e-12, "{p:?}");
    }
}

#[test]
fn large_n_sampling_follows_a_pure_ghz_fringe() {
    let mut cfg = ExperimentConfig::large_n(0.0);
    cfg.large_n.losses = false;
    cfg.noise = NoiseParams::pure();
    cfg.mean_n_r = 5.0;
    cfg.nu = 4000;
    cfg.scan = vec![0.0, 0.01, 0.02, 0.05];
    let model = GateContrastModel::perfect(1.0);
    let d = run_large_n(&cfg, &model).unwrap();
    d.check_tallies().unwrap();
    for p in &d.points {
        let (p0, p1) = poisson_pure_fringe(cfg.mean_n_r, cfg.phase(p.delta_omega_over_omega0));
        assert!((p.sigma_z_mean - (p0 - p1)).abs() < 4.0 / (cfg.nu as f64).sqrt(), "{p:?}");
    }
}

#[test]
fn large_n_is_deterministic_with_losses() {
    let cfg = ExperimentConfig::large_n(1e4);
    let model = GateContrastModel::perfect(cfg.noise.p_c);
    let a = run_large_n(&cfg, &model).unwrap();
    assert_eq!(a, run_large_n(&cfg, &model).unwrap());
    a.check_tallies().unwrap();
    let lost: u32 = a.points.iter().map(|p| p.losses).sum();
    let rate = lost as f64 / (cfg.nu as f64 * a.points.len() as f64);
    assert!((rate - 0.06).abs() < 0.02, "{rate}");
}

#[test]
fn perfect_gates_keep_the_control_purity() {
    let mut cfg = ideal_gate(ExperimentConfig::large_n(0.0));
    cfg.nu = 3;
    cfg.large_n.contrast_max_n = 4;
    cfg.large_n.bank_size = 2;
    cfg.gate.slices = 200;
    let model = gate_contrast_curve(&cfg).unwrap();
    for &(n, c) in &model.points {
        assert!((c - cfg.noise.p_c).abs() < 5e-3, "n={n}: {c}");
    }
    let perfect = GateContrastModel::perfect(0.9);
    for n in [1, 9, 25, 100] {
        assert_eq!(perfect.contrast_at(n), 0.9);
    }
}

#[test]
fn gravity_presets() {
    let w1 = gravity_omega(1.0, qmetro_core::units::M_RB87, qmetro_core::units::G_STANDARD).unwrap();
    assert!((w1 / (2.0 * std::f64::consts::PI * 2145.0) - 1.0).abs() < 0.005);
    assert!((GravityPreset::Nominal.omega() / (2.0 * std::f64::consts::PI) - 5326.0).abs() < 1e-9);
    assert!((GravityPreset::LinearScaling.omega() / (2.0 * std::f64::consts::PI) - 5363.0).abs() < 1e-9);
}
