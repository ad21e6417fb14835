//! Invariants checked over randomized inputs.

use std::sync::Arc;

use fdia_core::attack::{run_attack_campaign, verify_spoof_identity, GeneratorKind};
use fdia_core::controllers::{ekf_step, EkfState, LtiController};
use fdia_core::detectors::evaluate_detector;
use fdia_core::dynamics::{simulate_closed_loop, ClosedLoop, Controller, LinearDynamics, NoiseStream, PlantModel, SimulationOptions};
use fdia_core::linalg::{Matrix, Vector};
use fdia_core::scenarios::{build_scalar_lti_bench, build_scenario, ScenarioConfig, ScenarioKind};
use fdia_core::stability::{min_compromised_sensors, probe_ies};
use fdia_core::stealth::stealth_bound;
use proptest::prelude::*;

fn scalar_plant(a: f64) -> PlantModel {
    let lin = LinearDynamics::scalar(a, 1.0, 1.0);
    PlantModel::new(Arc::new(lin), Matrix::from_element(1, 1, 0.01), Matrix::from_element(1, 1, 0.01), 1.0).unwrap()
}

fn v1(x: f64) -> Vector {
    Vector::from_element(1, x)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn simulation_is_deterministic(seed in any::<u64>(), x0 in -1.0..1.0f64) {
        let sc = build_scenario(&build_scalar_lti_bench()).unwrap();
        let run = || {
            let opts = SimulationOptions::new(50);
            simulate_closed_loop(&sc.plant, &sc.controller, &v1(x0), &sc.controller.initial_state(), &NoiseStream::new(seed), &opts, None)
                .unwrap()
                .0
        };
        prop_assert_eq!(run(), run());
    }

    #[test]
    fn rollouts_from_different_starts_share_noise(seed in any::<u64>(), x1 in -1.0..1.0f64, x2 in -1.0..1.0f64) {
        let sc = build_scenario(&build_scalar_lti_bench()).unwrap();
        let noise = NoiseStream::new(seed);
        let opts = SimulationOptions::new(40);
        let c0 = sc.controller.initial_state();
        let (a, _) = simulate_closed_loop(&sc.plant, &sc.controller, &v1(x1), &c0, &noise, &opts, None).unwrap();
        let (b, _) = simulate_closed_loop(&sc.plant, &sc.controller, &v1(x2), &c0, &noise, &opts, None).unwrap();
        prop_assert_eq!(&a.process_noise, &b.process_noise);
        prop_assert_eq!(&a.measurement_noise, &b.measurement_noise);
    }

    #[test]
    fn scalar_loop_matches_recursion(a in -1.5..1.5f64, k in -1.0..1.0f64, seed in any::<u64>(), x0 in -2.0..2.0f64) {
        let plant = scalar_plant(a);
        let ctrl = LtiController::static_gain(Matrix::from_element(1, 1, -k));
        let opts = SimulationOptions::new(60);
        let (tr, _) = simulate_closed_loop(&plant, &ctrl, &v1(x0), &ctrl.initial_state(), &NoiseStream::new(seed), &opts, None).unwrap();
        let mut x = x0;
        for t in 0..tr.steps() {
            let y = x + tr.measurement_noise[t][0];
            let u = -k * y;
            prop_assert!((tr.inputs[t][0] - u).abs() <= 1e-12 * u.abs().max(1.0));
            x = a * x + u + tr.process_noise[t][0];
            let got = tr.states[t + 1][0];
            prop_assert!((got - x).abs() <= 1e-12 * x.abs().max(1.0), "t {} got {} want {}", t, got, x);
        }
    }

    #[test]
    fn halving_the_seed_halves_the_reduced_attack(seed in any::<u64>(), norm in 1e-4..1e-1f64) {
        let sc = build_scenario(&build_scalar_lti_bench()).unwrap();
        let mut settings = sc.config.campaign_settings();
        settings.generator = GeneratorKind::LinearReduction;
        settings.pre_roll = 20;
        let noise = NoiseStream::new(seed);
        let full = run_attack_campaign(&sc.plant, &sc.controller, &v1(norm), &noise, &settings).unwrap();
        let half = run_attack_campaign(&sc.plant, &sc.controller, &v1(norm * 0.5), &noise, &settings).unwrap();
        let common = full.attacked.injections.len().min(half.attacked.injections.len());
        prop_assert!(common > 0);
        for t in 0..common {
            prop_assert_eq!(&half.attacked.injections[t] * 2.0, full.attacked.injections[t].clone());
        }
    }

    #[test]
    fn full_and_reduced_generators_agree_on_lti(seed in any::<u64>(), norm in 1e-4..1e-1f64) {
        let sc = build_scenario(&build_scalar_lti_bench()).unwrap();
        let noise = NoiseStream::new(seed);
        let mut settings = sc.config.campaign_settings();
        settings.pre_roll = 20;
        let full = run_attack_campaign(&sc.plant, &sc.controller, &v1(norm), &noise, &settings).unwrap();
        settings.generator = GeneratorKind::LinearReduction;
        let reduced = run_attack_campaign(&sc.plant, &sc.controller, &v1(norm), &noise, &settings).unwrap();
        let common = full.attacked.injections.len().min(reduced.attacked.injections.len());
        for t in 0..common {
            let scale = full.attacked.states[t].amax().max(1.0);
            let diff = (&full.attacked.injections[t] - &reduced.attacked.injections[t]).amax();
            prop_assert!(diff <= 1e-9 * scale, "t {} diff {}", t, diff);
        }
    }

    #[test]
    fn spoof_identity_holds(seed in any::<u64>(), a in 1.1..3.0f64, norm in 1e-4..1e-1f64) {
        let mut cfg = build_scalar_lti_bench();
        cfg.lti.a = vec![vec![a]];
        cfg.controller.gain = Some(vec![vec![a - 0.5]]);
        let sc = build_scenario(&cfg).unwrap();
        let mut settings = cfg.campaign_settings();
        settings.pre_roll = 20;
        let r = run_attack_campaign(&sc.plant, &sc.controller, &v1(norm), &NoiseStream::new(seed), &settings).unwrap();
        prop_assert!(verify_spoof_identity(&r, &sc.plant) <= 1e-9);
        // The attacked and counterfactual runs see the same noise.
        let k = r.attacked.process_noise.len().min(r.counterfactual.process_noise.len());
        prop_assert_eq!(&r.attacked.process_noise[..k], &r.counterfactual.process_noise[..k]);
    }

    #[test]
    fn bound_is_monotone(kappa in 1.0..20.0f64, lambda in 1.01..3.0f64, s0 in 1e-5..1e-2f64, var in 0.005..0.1f64) {
        let cov = Matrix::identity(2, 2) * var;
        let b = |k: f64, l: f64, s: f64, v: f64| {
            stealth_bound(k, l, s, 1.0, &(Matrix::identity(2, 2) * v), &(Matrix::identity(2, 2) * v)).unwrap()
        };
        let (b0, e0) = stealth_bound(kappa, lambda, s0, 1.0, &cov, &cov).unwrap();
        prop_assert!(b0 < 30.0);
        for (b1, e1) in [b(kappa * 1.1, lambda, s0, var), b(kappa, lambda, s0 * 1.1, var), b(kappa, lambda, s0, var * 0.9)] {
            prop_assert!(b1 > b0 && e1 > e0);
        }
        let (b1, e1) = b(kappa, lambda * 1.1, s0, var);
        prop_assert!(b1 < b0 && e1 < e0);
    }

    #[test]
    fn sensor_set_is_invariant_to_diagonal_rescaling(
        eig in prop::array::uniform3(prop::sample::select(vec![-2.5, -1.7, -0.6, 0.3, 0.8, 1.4, 2.2])),
        vraw in prop::array::uniform9(-2i32..=2),
        craw in prop::array::uniform9(0i32..=1),
        scales in prop::array::uniform3(0.1..10.0f64),
    ) {
        prop_assume!(eig[0] != eig[1] && eig[1] != eig[2] && eig[0] != eig[2]);
        let v = Matrix::from_row_slice(3, 3, &vraw.map(f64::from));
        let vinv = v.clone().try_inverse();
        prop_assume!(vinv.is_some() && v.determinant().abs() > 0.5);
        let a = &v * Matrix::from_diagonal(&Vector::from_column_slice(&eig)) * vinv.unwrap();
        let c = Matrix::from_row_slice(3, 3, &craw.map(f64::from));
        let s = Matrix::from_diagonal(&Vector::from_column_slice(&scales));
        let sinv = Matrix::from_diagonal(&Vector::from_column_slice(&scales.map(|x| 1.0 / x)));
        let base = min_compromised_sensors(&a, &c);
        let scaled = min_compromised_sensors(&(&s * &a * &sinv), &(&c * &sinv));
        let rows = min_compromised_sensors(&a, &(Matrix::from_diagonal(&Vector::from_vec(vec![3.0, -0.5, 7.0])) * &c));
        prop_assert_eq!(&base, &scaled);
        prop_assert_eq!(&base, &rows);
    }

    #[test]
    fn roc_is_monotone(p in prop::collection::vec(-5.0..5.0f64, 100..200), q in prop::collection::vec(-5.0..5.0f64, 100..200), tau in -5.0..5.0f64) {
        let ev = evaluate_detector(&p, &q, tau).unwrap();
        for w in ev.roc.windows(2) {
            prop_assert!(w[1].false_alarm >= w[0].false_alarm);
            prop_assert!(w[1].detection >= w[0].detection);
        }
        prop_assert!((0.0..=1.0).contains(&ev.auc));
    }

    #[test]
    fn ekf_covariance_stays_symmetric(ys in prop::collection::vec((-0.5..0.5f64, -2.0..2.0f64), 1..60)) {
        let cfg = ScenarioConfig::defaults(ScenarioKind::Pendulum);
        let sc = build_scenario(&cfg).unwrap();
        let mut st: EkfState = sc.controller.initial_filter().clone();
        for (th, om) in ys {
            let u = -(sc.controller.gain() * &st.estimate);
            st = ekf_step(&sc.plant, &st, &u, &Vector::from_vec(vec![th, om])).unwrap();
            prop_assert!((&st.covariance - st.covariance.transpose()).amax() <= 1e-9);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(4))]

    #[test]
    fn probe_verdicts_are_deterministic(seed in any::<u64>()) {
        let mut cfg = build_scalar_lti_bench();
        cfg.seed = seed;
        let sc = build_scenario(&cfg).unwrap();
        let sys = ClosedLoop::new(&sc.plant, &sc.controller);
        prop_assert_eq!(probe_ies(&sys, &cfg.ies_settings()).unwrap(), probe_ies(&sys, &cfg.ies_settings()).unwrap());
    }
}
