//! Controller adequacy and attack impact on the pendulum defaults.

use std::f64::consts::{FRAC_PI_3, PI};

use fdia_core::experiments::{attack_run, nominal_run, trace_seed, Role};
use fdia_core::scenarios::{build_scenario, ScenarioConfig, ScenarioKind};

#[test]
fn nominal_runs_stay_upright() {
    let mut cfg = ScenarioConfig::defaults(ScenarioKind::Pendulum);
    cfg.horizon = 2000;
    let sc = build_scenario(&cfg).unwrap();
    let upright = (0..100)
        .filter(|&i| {
            let tr = nominal_run(&sc, trace_seed(cfg.seed, Role::Nominal, i)).unwrap();
            !tr.is_diverged() && tr.states.iter().all(|x| x[0].abs() < FRAC_PI_3)
        })
        .count();
    assert!(upright >= 99, "{upright}/100 upright");
}

#[test]
fn attacked_pendulum_falls_while_counterfactual_stays_up() {
    let cfg = ScenarioConfig::defaults(ScenarioKind::Pendulum);
    let sc = build_scenario(&cfg).unwrap();
    let s0 = sc.attack_seed().unwrap();
    for i in 0..5 {
        let r = attack_run(&sc, &s0, trace_seed(cfg.seed, Role::Attack, i)).unwrap();
        assert!(r.first_crossing.is_some());
        assert!(r.max_magnitude() >= PI - 0.1, "max |θ| {}", r.max_magnitude());
        assert!(r.counterfactual_max_magnitude() < FRAC_PI_3);
    }
}
