use proptest::prelude::*;
use qmetro_core::analytic::*;
use qmetro_core::estimation::*;
use qmetro_core::rydberg::*;
use qmetro_core::trap::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn outcome_table_is_normalised(n_r in 0usize..40, p_c in 0.0..=1.0f64, p_r in 0.0..=1.0f64, phase in -20.0..20.0f64) {
        let d = outcome_probabilities(&ProtocolConfig::new(n_r, phase, 1.0, 1).unwrap(), &NoiseParams::new(p_c, p_r).unwrap()).unwrap();
        prop_assert!((d.total() - 1.0).abs() <= 1e-12);
        prop_assert!(d.as_slice().iter().all(|&p| p >= 0.0));
    }

    #[test]
    fn dephased_control_gives_half(n_r in 1usize..30, p_r in 0.0..=1.0f64, phase in -20.0..20.0f64) {
        let (p0, p1) = control_marginals(&ProtocolConfig::new(n_r, phase, 1.0, 1).unwrap(), &NoiseParams::new(0.0, p_r).unwrap()).unwrap();
        prop_assert!((p0 - 0.5).abs() < 1e-14 && (p1 - 0.5).abs() < 1e-14);
    }

    #[test]
    fn control_fisher_peak_approaches_the_closed_form(n_r in 1usize..30, p_r in 0.0..=1.0f64, a in 1u32..4) {
        let t = 1e-3;
        let fam = ControlFamily::fixed(n_r, NoiseParams::new(1.0, p_r).unwrap(), t);
        let closed = fisher_closed_form(n_r, p_r, t);
        let w = |eps: f64| (2.0 * std::f64::consts::PI * a as f64 - eps) / t;
        let coarse = (fam.fisher(w(1e-2)) / closed - 1.0).abs();
        let fine = (fam.fisher(w(1e-4)) / closed - 1.0).abs();
        prop_assert!(fine <= coarse + 1e-6);
        prop_assert!(fine < 1e-4, "{fine}");
    }

    #[test]
    fn control_fisher_grows_with_register_purity(n_r in 2usize..20, p in 0.0..0.99f64, dp in 0.0..0.01f64) {
        let t = 1e-3;
        let eps = 0.05 / n_r as f64;
        let w = (2.0 * std::f64::consts::PI - eps) / t;
        let f = |p_r: f64| ControlFamily::fixed(n_r, NoiseParams::new(1.0, p_r).unwrap(), t).fisher(w);
        prop_assert!(f(p + dp) >= f(p) * (1.0 - 1e-12));
    }

    #[test]
    fn pair_shift_shape(r in 0.06..30.0f64, dr in 1e-3..1.0f64, c in 1e3..1e5f64, d in prop_oneof![-1000.0..-1.0f64, 1.0..1000.0f64]) {
        let p = InteractionParams { c_dd: c, delta_def: d, class: PairClass::ControlRegister };
        let v1 = pair_shift(r, &p).unwrap();
        let v2 = pair_shift(r + dr, &p).unwrap();
        prop_assert!(v2.abs() < v1.abs());
        prop_assert_eq!(v1.signum(), -d.signum());
    }

    #[test]
    fn pair_shift_branches_meet_at_r_max(c in 1e3..1e5f64, d in prop_oneof![-1000.0..-1.0f64, 1.0..1000.0f64]) {
        let p = InteractionParams { c_dd: c, delta_def: d, class: PairClass::RegisterRegister };
        let r = r_max(&p);
        let near = c / r.powi(3);
        let far = c * c / (d.abs() * r.powi(6));
        prop_assert!(near / far <= 2.0 + 1e-9 && far / near <= 2.0 + 1e-9);
    }

    #[test]
    fn survival_is_non_increasing(n in 0usize..60, t in 0.0..1e-2f64, g in 0.0..100.0f64, dn in 0usize..5, dt in 0.0..1e-3f64, dg in 0.0..10.0f64) {
        let p = no_loss_probability(n, t, g);
        prop_assert!(no_loss_probability(n + dn, t, g) <= p);
        prop_assert!(no_loss_probability(n, t + dt, g) <= p);
        prop_assert!(no_loss_probability(n, t, g + dg) <= p);
    }

    #[test]
    fn two_body_rate_scales_with_pairs(n in 2usize..200) {
        let (g, m) = (TrapGeometry::register(), LossModel::default());
        let r = two_body_loss_rate(n, &g, &m) / two_body_loss_rate(2, &g, &m);
        let pairs = (n * (n - 1) / 2) as f64;
        prop_assert!((r / pairs - 1.0).abs() < 1e-12);
    }

    #[test]
    fn refit_of_a_fitted_model_is_exact(contrast in 0.1..1.0f64, phase in -3.0..3.0f64, n_eff in 1.0..6.0f64) {
        let t = 1e-3;
        let w: Vec<f64> = (0..25).map(|i| 1e4 * (0.8 + 0.4 * i as f64 / 24.0)).collect();
        let y: Vec<f64> = w.iter().map(|x| contrast * (n_eff * x * t + phase).cos()).collect();
        let fit = fit_points(&w, &y, t, FringeModel::Cosine { n_eff }, 1e4).unwrap();
        let y2: Vec<f64> = w.iter().map(|x| fit.sigma_z(*x)).collect();
        let fit2 = fit_points(&w, &y2, t, FringeModel::Cosine { n_eff }, 1e4).unwrap();
        prop_assert!((fit.contrast - contrast).abs() < 1e-8, "{} {}", fit.contrast, contrast);
        prop_assert!((fit2.contrast - fit.contrast).abs() < 1e-8);
        let dphi = (fit2.phase - fit.phase).rem_euclid(2.0 * std::f64::consts::PI);
        prop_assert!(dphi.min(2.0 * std::f64::consts::PI - dphi) < 1e-8);
        prop_assert!(fit.residual >= 0.0 && (0.0..=1.0).contains(&fit.contrast));
    }

    #[test]
    fn fitted_fisher_is_non_negative(contrast in 0.0..1.0f64, phase in -3.0..3.0f64, w in 0.0..2e4f64) {
        let t = 1e-3;
        let grid: Vec<f64> = (0..9).map(|i| 1e3 * i as f64).collect();
        let y: Vec<f64> = grid.iter().map(|x| contrast * (x * t + phase).cos()).collect();
        let fit = fit_points(&grid, &y, t, FringeModel::Cosine { n_eff: 1.0 }, 4e3).unwrap();
        let f = numerical_fisher(&fit, w);
        prop_assert!(f.value >= 0.0);
        if fit.slope(w) == 0.0 {
            prop_assert_eq!(f.value, 0.0);
        }
        let a = sensitivity_report(f.value.max(1e-30), 3e4, t, 25.0).unwrap();
        let b = sensitivity_report(f.value.max(1e-30), 3e4, t, 25.0).unwrap();
        prop_assert_eq!(a, b);
    }
}
