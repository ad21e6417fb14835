//! End-to-end acceptance criteria. Prints one PASS/FAIL line per criterion
//! and exits nonzero if any criterion fails.

use std::f64::consts::{FRAC_PI_3, PI};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use fdia::commands::{run, CommandKind, RunOptions};
use fdia::config::serialize_config;
use fdia_core::attack::{verify_spoof_identity, CampaignResult};
use fdia_core::controllers::closed_loop_matrix;
use fdia_core::detectors::{
    calibrate_threshold, gaussian_residual_hypotheses, likelihood_ratio_detector, CoinDetector,
};
use fdia_core::dynamics::ClosedLoop;
use fdia_core::experiments::{attack_run, chi2_scores, residual_ensembles, sweep, trace_seed, Role};
use fdia_core::linalg::{matrix_to_rows, Matrix, Vector};
use fdia_core::scenarios::{
    build_null_bench, build_scalar_lti_bench, build_scenario, ControllerKind, Scenario, ScenarioConfig, ScenarioKind,
};
use fdia_core::stability::{
    check_vulnerability, lti_is_ies, lti_is_iu, min_compromised_sensors, probe_ies, probe_iu, IesVerdict, IuVerdict,
    Vulnerability,
};
use fdia_core::stealth::{binomial_half_width, empirical_kl, error_sum, stealth_bound, StealthReport, DEFAULT_K};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

fn pendulum() -> Scenario {
    build_scenario(&ScenarioConfig::defaults(ScenarioKind::Pendulum)).unwrap()
}

fn scalar() -> Scenario {
    build_scenario(&build_scalar_lti_bench()).unwrap()
}

fn campaigns(sc: &Scenario, count: u64) -> Vec<CampaignResult> {
    let s0 = sc.attack_seed().unwrap();
    (0..count).map(|i| attack_run(sc, &s0, trace_seed(sc.config.seed, Role::Attack, i)).unwrap()).collect()
}

fn c1_case_study() -> Verdict {
    let start = Instant::now();
    let sc = pendulum();
    let runs = campaigns(&sc, 100);
    let ok = runs
        .iter()
        .filter(|r| {
            let exits = r.attacked.states.iter().any(|x| x[0].abs() >= FRAC_PI_3);
            exits && r.max_magnitude() >= PI - 0.1 && r.counterfactual_max_magnitude() < FRAC_PI_3
        })
        .count();
    let elapsed = start.elapsed();
    verdict(
        ok >= 90 && elapsed <= Duration::from_secs(120),
        format!("{ok}/100 seeds fell past pi-0.1 with an upright counterfactual in {:.1}s", elapsed.as_secs_f64()),
    )
}

fn c2_chi2_stealth() -> Verdict {
    let sc = pendulum();
    let s0 = sc.attack_seed().unwrap();
    let (p, q) = chi2_scores(&sc, &s0, 500).unwrap();
    let tau = calibrate_threshold(&p, 0.05).unwrap();
    let fa = p.iter().filter(|&&s| s > tau).count() as f64 / 500.0;
    let det = q.iter().filter(|&&s| s > tau).count() as f64 / 500.0;
    let det_upper = det + binomial_half_width(det, 500);
    verdict(
        det_upper <= fa + 0.05,
        format!("tau {tau:.3}, false alarm {fa:.3}, detection {det:.3} (95% upper {det_upper:.3}) vs limit {:.3}", fa + 0.05),
    )
}

/// Random LTI instance for the probe-versus-spectrum checks.
struct LtiInstance {
    cfg: ScenarioConfig,
    unstable_a: bool,
    stable_loop: bool,
}

fn random_eigenbasis(rng: &mut ChaCha8Rng, eig: &[f64]) -> Matrix {
    let n = eig.len();
    loop {
        let v = Matrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        if v.determinant().abs() > 0.2 {
            let d = Matrix::from_diagonal(&Vector::from_column_slice(eig));
            return &v * d * v.clone().try_inverse().unwrap();
        }
    }
}

fn random_lti_instances(count: usize) -> Vec<LtiInstance> {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut out = Vec::new();
    while out.len() < count {
        let i = out.len();
        let unstable_a = i % 2 == 0;
        let sign = |rng: &mut ChaCha8Rng| if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        let e0 = if unstable_a { sign(&mut rng) * rng.random_range(1.15..1.6) } else { sign(&mut rng) * rng.random_range(0.1..0.85) };
        let e1 = sign(&mut rng) * rng.random_range(0.0..0.8);
        let a = random_eigenbasis(&mut rng, &[e0, e1]);
        let b = Matrix::from_fn(2, 1, |_, _| rng.random_range(-1.0..1.0));
        let c = Matrix::from_fn(2, 2, |r, k| if r == k { 1.0 } else { rng.random_range(-0.5..0.5) });
        let mut cfg = ScenarioConfig::defaults(ScenarioKind::Lti);
        cfg.seed = 100 + i as u64;
        cfg.horizon = 300;
        cfg.lti.a = matrix_to_rows(&a);
        cfg.lti.b = matrix_to_rows(&b);
        cfg.lti.c = matrix_to_rows(&c);
        cfg.lti.process_cov = vec![vec![0.01, 0.0], vec![0.0, 0.01]];
        cfg.lti.measurement_cov = vec![vec![0.01, 0.0], vec![0.0, 0.01]];
        // Every fourth instance runs open loop, so unstable plants also give unstable loops.
        if i % 4 == 3 {
            cfg.controller.kind = ControllerKind::Gain;
            cfg.controller.gain = Some(vec![vec![0.0, 0.0]]);
        } else {
            cfg.controller.kind = ControllerKind::Lqr;
            cfg.controller.state_weights = vec![1.0, 1.0];
            cfg.controller.gain = None;
        }
        let Ok(sc) = build_scenario(&cfg) else { continue };
        let cl = closed_loop_matrix(sc.linear().unwrap(), &sc.controller.as_lti().unwrap()).unwrap();
        let rho = fdia_core::linalg::spectral_radius(&cl).unwrap();
        // Keep clear of the unit circle so that finite probes can decide.
        if (0.9..=1.1).contains(&rho) {
            continue;
        }
        out.push(LtiInstance {
            cfg,
            unstable_a,
            stable_loop: rho < 0.9,
        });
    }
    out
}

fn c3_spoof_identity() -> Verdict {
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    let mut scenarios = vec![pendulum(), scalar(), build_scenario(&build_null_bench()).unwrap()];
    scenarios.extend(random_lti_instances(20).into_iter().map(|inst| build_scenario(&inst.cfg).unwrap()));
    for sc in &scenarios {
        for r in campaigns(sc, 5) {
            worst = worst.max(verify_spoof_identity(&r, &sc.plant));
            checked += 1;
        }
    }
    verdict(worst <= 1e-9, format!("max |y_c - (h(e)+v)| = {worst:.2e} over {checked} campaigns on {} scenarios", scenarios.len()))
}

fn c4_convergence() -> Verdict {
    let mut parts = Vec::new();
    let mut pass = true;
    for (name, sc) in [("pendulum", pendulum()), ("scalar-lti", scalar())] {
        let ies = probe_ies(&ClosedLoop::new(&sc.plant, &sc.controller), &sc.config.ies_settings()).unwrap();
        if ies.verdict != IesVerdict::IesConsistent {
            pass = false;
            parts.push(format!("{name}: probe verdict {:?}", ies.verdict));
            continue;
        }
        let kappa = 1.5 * ies.kappa;
        let mut worst: f64 = 0.0;
        let mut worst_raw: f64 = 0.0;
        let mut raw_violations = 0usize;
        for r in campaigns(&sc, 100) {
            let s0 = r.s0.norm();
            for (t, gap) in r.closed_loop_gap.iter().enumerate() {
                let bound = kappa * s0 * ies.lambda.powi(-(t as i32));
                // Cancellation in e = x^a - s leaves a rounding floor relative to ‖x^a‖.
                let floor = 1e-13 * r.attacked.states[t].norm().max(1.0);
                worst = worst.max(gap / (bound + floor));
                if bound > floor {
                    worst_raw = worst_raw.max(gap / bound);
                    raw_violations += usize::from(*gap > bound);
                }
            }
        }
        pass &= worst <= 1.0;
        parts.push(format!(
            "{name}: kappa {:.3} lambda {:.4}, worst gap/bound {worst:.3} (where the bound exceeds the rounding floor: {raw_violations} steps above it, worst {worst_raw:.3})",
            ies.kappa, ies.lambda
        ));
    }
    verdict(pass, parts.join("; "))
}

fn c5_kl_chain() -> Verdict {
    let sc = scalar();
    let ies = probe_ies(&ClosedLoop::new(&sc.plant, &sc.controller), &sc.config.ies_settings()).unwrap();
    let kappa = 1.5 * ies.kappa;
    let mut worst: f64 = 0.0;
    let mut bound = f64::NAN;
    for r in campaigns(&sc, 100) {
        let rep = StealthReport::from_campaign(&r, &sc.plant, kappa, ies.lambda).unwrap();
        worst = worst.max(rep.realized_sum / rep.bound);
        bound = rep.bound;
    }
    let s0 = sc.attack_seed().unwrap();
    let (p, q) = residual_ensembles(&sc, &s0, 10_000, 2).unwrap();
    let kl = empirical_kl(&p, &q, DEFAULT_K).unwrap().value;
    verdict(
        worst <= 1.0 && kl <= bound + 0.1,
        format!("realized/bound worst {worst:.4}; k-NN KL {kl:.4} vs b_eps + 0.1 = {:.4}", bound + 0.1),
    )
}

fn c6_random_guess() -> Verdict {
    let coin = CoinDetector::new(17);
    let ap: Vec<bool> = (0..500u64).map(|i| coin.verdict(i)).collect();
    let aq: Vec<bool> = (500..1000u64).map(|i| coin.verdict(i)).collect();
    let c = error_sum(&ap, &aq).unwrap();
    let sc = scalar();
    let zero = Vector::zeros(1);
    let (h0, h1) = gaussian_residual_hypotheses(&sc.controller, &zero, 10).unwrap();
    let (p, q) = residual_ensembles(&sc, &zero, 500, 10).unwrap();
    let lp: Vec<bool> = p.iter().map(|o| likelihood_ratio_detector(&h0, &h1, o).unwrap()).collect();
    let lq: Vec<bool> = q.iter().map(|o| likelihood_ratio_detector(&h0, &h1, o).unwrap()).collect();
    let l = error_sum(&lp, &lq).unwrap();
    let inside = |e: &fdia_core::stealth::ErrorSumEstimate| (e.error_sum - 1.0).abs() <= e.half_width.max(1e-12);
    verdict(
        inside(&c) && inside(&l),
        format!("coin p^e {:.3} ± {:.3}; LR on P=Q p^e {:.3} ± {:.3}", c.error_sum, c.half_width, l.error_sum, l.half_width),
    )
}

fn c7_optimal_floor() -> Verdict {
    let sc = scalar();
    let ies = probe_ies(&ClosedLoop::new(&sc.plant, &sc.controller), &sc.config.ies_settings()).unwrap();
    let kappa = 1.5 * ies.kappa;
    let (sw, sv) = (sc.plant.process_cov(), sc.plant.measurement_cov());
    let l_h = sc.plant.output_lipschitz();
    let (unit_bound, _) = stealth_bound(kappa, ies.lambda, 1.0, l_h, sw, sv).unwrap();
    // Largest ‖s_0‖ whose bound gives ε ≤ 0.1, with a little margin.
    let target = -(1.0f64 - 0.1 * 0.1).ln();
    let norm = 0.999 * (target / unit_bound).sqrt();
    let (_, eps) = stealth_bound(kappa, ies.lambda, norm, l_h, sw, sv).unwrap();
    let s0 = sc.attack_seed_with_norm(norm).unwrap();
    let w = 10;
    let (h0, h1) = gaussian_residual_hypotheses(&sc.controller, &s0, w).unwrap();
    let (p, q) = residual_ensembles(&sc, &s0, 500, w).unwrap();
    let ap: Vec<bool> = p.iter().map(|o| likelihood_ratio_detector(&h0, &h1, o).unwrap()).collect();
    let aq: Vec<bool> = q.iter().map(|o| likelihood_ratio_detector(&h0, &h1, o).unwrap()).collect();
    let e = error_sum(&ap, &aq).unwrap();
    let floor = 1.0 - 0.1 - e.half_width;
    verdict(
        eps <= 0.1 && e.error_sum >= floor,
        format!("|s0| {norm:.3e}, eps {eps:.4}; LR p^e {:.3} >= {floor:.3}", e.error_sum),
    )
}

fn c8_lti_spectral_agreement() -> Verdict {
    let mut mismatches = Vec::new();
    let (mut vulnerable, mut crossed, mut stable_a, mut stayed) = (0, 0, 0, 0);
    for (i, inst) in random_lti_instances(20).iter().enumerate() {
        let sc = build_scenario(&inst.cfg).unwrap();
        let lin = sc.linear().unwrap();
        let cl = closed_loop_matrix(lin, &sc.controller.as_lti().unwrap()).unwrap();
        let ies = probe_ies(&ClosedLoop::new(&sc.plant, &sc.controller), &inst.cfg.ies_settings()).unwrap();
        let iu = probe_iu(&sc.plant, &sc.controller, &inst.cfg.iu_settings()).unwrap();
        let spectral_ies = lti_is_ies(&cl).unwrap();
        let spectral_iu = lti_is_iu(&lin.a).unwrap();
        if (ies.verdict == IesVerdict::IesConsistent) != spectral_ies {
            mismatches.push(format!("#{i} IES {:?} vs {spectral_ies}", ies.verdict));
        }
        if (iu.verdict == IuVerdict::IuConsistent) != spectral_iu {
            mismatches.push(format!("#{i} IU {:?} vs {spectral_iu}", iu.verdict));
        }
        let s0 = sc.attack_seed().unwrap();
        if inst.unstable_a && inst.stable_loop {
            vulnerable += 1;
            let check = check_vulnerability(&sc.plant, &sc.controller, &inst.cfg.ies_settings(), &inst.cfg.iu_settings()).unwrap();
            let r = attack_run(&sc, &s0, trace_seed(inst.cfg.seed, Role::Attack, 0)).unwrap();
            if check.verdict == Vulnerability::Vulnerable && r.first_crossing.is_some() {
                crossed += 1;
            } else {
                mismatches.push(format!("#{i} verdict {:?}, crossing {:?}", check.verdict, r.first_crossing));
            }
        }
        if !inst.unstable_a {
            stable_a += 1;
            let mut cfg = inst.cfg.clone();
            cfg.alpha = 2.0 * cfg.safe_radius;
            let sc2 = build_scenario(&cfg).unwrap();
            let r = attack_run(&sc2, &s0, trace_seed(cfg.seed, Role::Attack, 0)).unwrap();
            if r.first_crossing.is_none() {
                stayed += 1;
            } else {
                mismatches.push(format!("#{i} stable plant crossed 2 R_S at {:?}", r.first_crossing));
            }
        }
    }
    verdict(
        mismatches.is_empty() && vulnerable > 0 && stable_a > 0,
        format!(
            "20 instances; {crossed}/{vulnerable} vulnerable instances crossed alpha; {stayed}/{stable_a} stable plants stayed inside 2 R_S; mismatches: {}",
            if mismatches.is_empty() { "none".to_string() } else { mismatches.join(", ") }
        ),
    )
}

/// Smallest nonempty `supp(C v)` over the unstable columns `v` of `V`,
/// lexicographic among equals.
fn support_oracle(v: &Matrix, eig: &[f64], c: &Matrix) -> Vec<usize> {
    let mut supports: Vec<Vec<usize>> = (0..eig.len())
        .filter(|&j| eig[j].abs() > 1.0)
        .map(|j| {
            let cv = c * v.column(j);
            (0..cv.len()).filter(|&i| cv[i] != 0.0).collect()
        })
        .collect();
    if supports.iter().any(|s| !s.is_empty()) {
        supports.retain(|s| !s.is_empty());
    }
    supports.sort_by(|x, y| x.len().cmp(&y.len()).then_with(|| x.cmp(y)));
    supports.swap_remove(0)
}

fn c9_sensor_sets() -> Verdict {
    let a = Matrix::from_diagonal(&Vector::from_vec(vec![2.0, 0.5]));
    let base = min_compromised_sensors(&a, &Matrix::identity(2, 2)).unwrap().indices;
    let mut pass = base == vec![0];
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let pool = [-2.7, -1.9, -1.3, -0.7, -0.2, 0.4, 0.9, 1.2, 1.6, 2.3];
    let mut agree = 0;
    let mut examples = Vec::new();
    let mut made = 0;
    while made < 10 {
        // Integer eigenvectors make the oracle's supports exact.
        let v = Matrix::from_fn(4, 4, |_, _| if rng.random_bool(0.5) { 0.0 } else { rng.random_range(-2i32..=2) as f64 });
        if v.determinant().abs() < 0.5 {
            continue;
        }
        let mut eig: Vec<f64> = Vec::new();
        while eig.len() < 4 {
            let e = pool[rng.random_range(0..pool.len())];
            if !eig.contains(&e) {
                eig.push(e);
            }
        }
        if eig.iter().all(|e| e.abs() < 1.0) {
            continue;
        }
        let c = Matrix::from_fn(4, 4, |_, _| if rng.random_bool(0.4) { 1.0 } else { 0.0 });
        let a = &v * Matrix::from_diagonal(&Vector::from_column_slice(&eig)) * v.clone().try_inverse().unwrap();
        made += 1;
        let expected = support_oracle(&v, &eig, &c);
        let got = min_compromised_sensors(&a, &c).unwrap().indices;
        if got == expected {
            agree += 1;
        } else {
            pass = false;
        }
        if examples.len() < 3 {
            examples.push(format!("{got:?}"));
        }
    }
    pass &= agree == 10;
    verdict(pass, format!("diag(2,0.5), C=I -> {base:?}; {agree}/10 random instances match the oracle (e.g. {})", examples.join(" ")))
}

fn run_command(command: CommandKind, cfg: &ScenarioConfig, dir: &std::path::Path, ensemble: Option<usize>) -> fdia::commands::RunOutcome {
    let path = dir.join("scenario.toml");
    std::fs::write(&path, serialize_config(cfg).unwrap()).unwrap();
    run(&RunOptions {
        command,
        config: path,
        out: dir.join("out"),
        seed: cfg.seed,
        ensemble,
        horizon: None,
    })
    .unwrap()
}

fn c10_sweep() -> Verdict {
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    run_command(CommandKind::Sweep, &build_scalar_lti_bench(), dir.path(), None);
    let table = std::fs::read_to_string(dir.path().join("out/sweep.csv")).unwrap();
    let rows: Vec<Vec<String>> = table.lines().skip(1).map(|l| l.split(',').map(str::to_string).collect()).collect();
    let eps: Vec<f64> = rows.iter().map(|r| r[2].parse().unwrap()).collect();
    let crossing: Vec<Option<usize>> = rows.iter().map(|r| r[3].parse().ok()).collect();
    let eps_up = eps.windows(2).all(|w| w[1] > w[0]);
    let t_down = crossing.iter().all(Option::is_some) && crossing.windows(2).all(|w| w[1] < w[0]);
    let elapsed = start.elapsed();
    // On the pendulum eps rounds to 1.0 at every norm, so only the exponent b is compared.
    let (_, pend) = sweep(&pendulum(), 400).unwrap();
    let b: Vec<f64> = pend.iter().map(|r| r.bound).collect();
    let b_text: Vec<String> = b.iter().map(|v| format!("{v:.3e}")).collect();
    let b_up = b.windows(2).all(|w| w[1] > w[0]);
    verdict(
        rows.len() == 4 && eps_up && t_down && b_up && elapsed <= Duration::from_secs(300),
        format!(
            "scalar-lti |s0| 1e-4..1e-1: eps {eps:.4?}, t' {crossing:?} in {:.1}s; pendulum b [{}]",
            elapsed.as_secs_f64(),
            b_text.join(", ")
        ),
    )
}

fn c11_reproducibility() -> Verdict {
    let mut cfg = ScenarioConfig::defaults(ScenarioKind::Pendulum);
    cfg.seed = 7;
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let mut identical = true;
    let mut files = 0;
    for command in [CommandKind::Simulate, CommandKind::Attack] {
        let ra = run_command(command, &cfg, a.path(), Some(5));
        run_command(command, &cfg, b.path(), Some(5));
        for f in ra.manifest.files.iter().map(|f| f.path.as_str()).chain(["manifest.json"]) {
            let fa = std::fs::read(a.path().join("out").join(f)).unwrap();
            let fb = std::fs::read(b.path().join("out").join(f)).unwrap();
            identical &= fa == fb;
            files += 1;
        }
    }
    verdict(identical, format!("{files} files compared byte for byte across two runs of simulate and attack"))
}

fn main() {
    let criteria: [(&str, fn() -> Verdict); 11] = [
        ("case-study reproduction", c1_case_study),
        ("stealth against chi2", c2_chi2_stealth),
        ("spoof identity", c3_spoof_identity),
        ("convergence bound", c4_convergence),
        ("KL bound chain", c5_kl_chain),
        ("random-guess floor", c6_random_guess),
        ("optimal-detector floor", c7_optimal_floor),
        ("LTI spectral agreement", c8_lti_spectral_agreement),
        ("sensor-set minimality", c9_sensor_sets),
        ("monotonicity sweep", c10_sweep),
        ("reproducibility", c11_reproducibility),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let v = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
            verdict(false, format!("panicked: {}", msg.unwrap_or_default()))
        });
        failed += usize::from(!v.pass);
        println!(
            "{} criterion {:>2} ({name}): {} [{:.1}s]",
            if v.pass { "PASS" } else { "FAIL" },
            i + 1,
            v.detail,
            start.elapsed().as_secs_f64()
        );
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
