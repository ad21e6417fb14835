//! Seeded ensembles built on a [`Scenario`]: nominal runs, attack campaigns,
//! detector experiments, the full analysis and the `‖s_0‖` sweep.
//!
//! Trace `i` of an ensemble draws its noise from a seed derived from the
//! scenario seed, the ensemble role and `i`, so ensembles never share noise
//! with each other and every result is a pure function of the configuration.

use alloc::string::String;
use alloc::vec::Vec;

use crate::attack::{run_attack_campaign, verify_spoof_identity, CampaignResult};
use crate::detectors::{calibrate_threshold, evaluate_detector, residual_window, Chi2Detector, DetectorEvaluation};
use crate::dynamics::{simulate_closed_loop, ClosedLoop, Controller, NoiseStream, SimulationOptions, Trajectory};
use crate::linalg::Vector;
use crate::scenarios::Scenario;
use crate::stability::{
    check_vulnerability_lti, min_compromised_sensors, probe_ies, probe_iu, IesEstimate, IesVerdict, IuEstimate, IuVerdict,
    LtiVulnerabilityCheck, SensorSet, Vulnerability,
};
use crate::stealth::{empirical_kl, StealthReport, DEFAULT_K};
use crate::{Error, Result};

/// Which ensemble a trace belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Role {
    Attack = 1,
    Nominal = 2,
    Calibration = 3,
}

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Noise seed of trace `index` in the ensemble `role`.
pub fn trace_seed(base: u64, role: Role, index: u64) -> u64 {
    mix(mix(base ^ ((role as u64) << 56)) ^ index)
}

/// Attack-free run: `pre_roll` steps from the origin, then `horizon` logged steps.
pub fn nominal_run(sc: &Scenario, seed: u64) -> Result<Trajectory> {
    let cfg = &sc.config;
    let (plant, ctrl) = (&sc.plant, &sc.controller);
    let noise = NoiseStream::new(seed);
    let n = plant.state_dim();
    let (x0, c0) = if cfg.pre_roll > 0 {
        let opts = SimulationOptions::new(cfg.pre_roll).starting_at(-(cfg.pre_roll as i64));
        let (pre, c) = simulate_closed_loop(plant, ctrl, &Vector::zeros(n), &ctrl.initial_state(), &noise, &opts, None)?;
        (pre.states.last().cloned().unwrap_or_else(|| Vector::zeros(n)), c)
    } else {
        (Vector::zeros(n), ctrl.initial_state())
    };
    let (tr, _) = simulate_closed_loop(plant, ctrl, &x0, &c0, &noise, &SimulationOptions::new(cfg.horizon), None)?;
    Ok(tr)
}

pub fn attack_run(sc: &Scenario, s0: &Vector, seed: u64) -> Result<CampaignResult> {
    run_attack_campaign(&sc.plant, &sc.controller, s0, &NoiseStream::new(seed), &sc.config.campaign_settings())
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DetectionExperiment {
    pub window: usize,
    pub target_false_alarm: f64,
    pub threshold: f64,
    pub evaluation: DetectorEvaluation,
}

/// χ² scores of `traces` nominal and `traces` attacked runs.
pub fn chi2_scores(sc: &Scenario, s0: &Vector, traces: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let (base, w) = (sc.config.seed, sc.config.detector.window);
    let mut p = Vec::with_capacity(traces);
    let mut q = Vec::with_capacity(traces);
    for i in 0..traces as u64 {
        let tr = nominal_run(sc, trace_seed(base, Role::Calibration, i))?;
        p.push(Chi2Detector::score(w, &tr.innovations)?);
        let r = attack_run(sc, s0, trace_seed(base, Role::Attack, i))?;
        q.push(Chi2Detector::score(w, &r.attacked.innovations)?);
    }
    Ok((p, q))
}

/// Calibrate the χ² threshold on the nominal ensemble, then evaluate it on
/// both ensembles.
pub fn chi2_experiment(sc: &Scenario, s0: &Vector, traces: usize) -> Result<DetectionExperiment> {
    let (p, q) = chi2_scores(sc, s0, traces)?;
    let target = sc.config.detector.false_alarm;
    let threshold = calibrate_threshold(&p, target)?;
    Ok(DetectionExperiment {
        window: sc.config.detector.window,
        target_false_alarm: target,
        threshold,
        evaluation: evaluate_detector(&p, &q, threshold)?,
    })
}

/// Stacked first innovations of nominal (P) and attacked (Q) runs, `window`
/// steps each.
pub fn residual_ensembles(sc: &Scenario, s0: &Vector, traces: usize, window: usize) -> Result<(Vec<Vector>, Vec<Vector>)> {
    let base = sc.config.seed;
    let mut p = Vec::with_capacity(traces);
    let mut q = Vec::with_capacity(traces);
    for i in 0..traces as u64 {
        p.push(residual_window(&nominal_run(sc, trace_seed(base, Role::Nominal, i))?.innovations, window)?);
        q.push(residual_window(&attack_run(sc, s0, trace_seed(base, Role::Attack, i))?.attacked.innovations, window)?);
    }
    Ok((p, q))
}

/// Residual window used for the empirical KL: two dimensions in total.
pub fn kl_window(output_dim: usize) -> usize {
    if output_dim >= 2 {
        1
    } else {
        2
    }
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CampaignSummary {
    pub seed: u64,
    pub s0: Vec<f64>,
    pub alpha: f64,
    pub first_crossing: Option<usize>,
    pub max_magnitude: f64,
    pub counterfactual_max_magnitude: f64,
    pub escaped_at: Option<usize>,
    pub counterfactual_diverged: bool,
    pub spoof_deviation: f64,
    pub consistency: f64,
}

impl CampaignSummary {
    pub fn new(result: &CampaignResult, sc: &Scenario, seed: u64) -> Self {
        CampaignSummary {
            seed,
            s0: result.s0.iter().copied().collect(),
            alpha: result.alpha,
            first_crossing: result.first_crossing,
            max_magnitude: result.max_magnitude(),
            counterfactual_max_magnitude: result.counterfactual_max_magnitude(),
            escaped_at: result.escaped_at,
            counterfactual_diverged: result.counterfactual_diverged,
            spoof_deviation: verify_spoof_identity(result, &sc.plant),
            consistency: result.consistency,
        }
    }
}

/// Everything the analysis reports.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Analysis {
    pub ies: IesEstimate,
    pub iu: IuEstimate,
    pub verdict: Vulnerability,
    pub exact: Option<LtiVulnerabilityCheck>,
    pub sensors: Option<SensorSet>,
    /// Present when the probed closed loop is IES-consistent.
    pub stealth: Option<StealthReport>,
    pub stealth_unavailable: Option<String>,
    pub campaign: CampaignSummary,
}

/// Probes, exact LTI checks, one campaign with its stealth report, and an
/// empirical KL estimate over `kl_traces` residual windows (skipped when 0).
pub fn analyze(sc: &Scenario, kl_traces: usize) -> Result<Analysis> {
    let cfg = &sc.config;
    let s0 = sc.attack_seed()?;
    let ies = probe_ies(&ClosedLoop::new(&sc.plant, &sc.controller), &cfg.ies_settings())?;
    let iu = probe_iu(&sc.plant, &sc.controller, &cfg.iu_settings())?;
    let mut verdict = if ies.verdict == IesVerdict::IesConsistent && iu.verdict == IuVerdict::IuConsistent {
        Vulnerability::Vulnerable
    } else {
        Vulnerability::ConditionNotVerified
    };
    let (exact, sensors) = match sc.linear() {
        Some(lin) => {
            let check = check_vulnerability_lti(lin, &sc.controller.as_lti()?)?;
            verdict = check.verdict;
            let sensors = match min_compromised_sensors(&lin.a, &lin.c) {
                Ok(s) => Some(s),
                Err(Error::NotIncrementallyUnstable) | Err(Error::Marginal(_)) => None,
                Err(e) => return Err(e),
            };
            (Some(check), sensors)
        }
        None => (None, None),
    };
    let seed = trace_seed(cfg.seed, Role::Attack, 0);
    let result = attack_run(sc, &s0, seed)?;
    let campaign = CampaignSummary::new(&result, sc, seed);
    let (stealth, stealth_unavailable) = if ies.verdict == IesVerdict::IesConsistent {
        let kappa = cfg.probe.kappa_slack * ies.kappa;
        match StealthReport::from_campaign(&result, &sc.plant, kappa, ies.lambda) {
            Ok(mut rep) => {
                if kl_traces > 0 {
                    let w = kl_window(sc.plant.output_dim());
                    let (p, q) = residual_ensembles(sc, &s0, kl_traces, w)?;
                    rep.empirical = Some(empirical_kl(&p, &q, DEFAULT_K)?);
                }
                (Some(rep), None)
            }
            Err(e @ (Error::KlUndefined | Error::BoundVoid)) => (None, Some(alloc::format!("{e}"))),
            Err(e) => return Err(e),
        }
    } else {
        (None, Some("closed loop not IES-consistent; bound void".into()))
    };
    Ok(Analysis {
        ies,
        iu,
        verdict,
        exact,
        sensors,
        stealth,
        stealth_unavailable,
        campaign,
    })
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SweepRow {
    pub s0_norm: f64,
    pub bound: f64,
    pub epsilon: f64,
    pub first_crossing: Option<usize>,
    pub error_sum: f64,
    pub error_sum_half_width: f64,
}

/// `(‖s_0‖, b_ε, ε, t′, p^e)` for every configured `‖s_0‖`, with `(κ̂, λ̂)`
/// from one IES probe and `p^e` from a χ² experiment of `traces` traces per
/// ensemble.
pub fn sweep(sc: &Scenario, traces: usize) -> Result<(IesEstimate, Vec<SweepRow>)> {
    let cfg = &sc.config;
    let ies = probe_ies(&ClosedLoop::new(&sc.plant, &sc.controller), &cfg.ies_settings())?;
    if ies.verdict != IesVerdict::IesConsistent {
        return Err(Error::BoundVoid);
    }
    let kappa = cfg.probe.kappa_slack * ies.kappa;
    let mut rows = Vec::with_capacity(cfg.sweep.s0_norms.len());
    let seed = trace_seed(cfg.seed, Role::Attack, 0);
    for &norm in &cfg.sweep.s0_norms {
        let s0 = sc.attack_seed_with_norm(norm)?;
        let (bound, epsilon) = crate::stealth::stealth_bound(
            kappa,
            ies.lambda,
            norm,
            sc.plant.output_lipschitz(),
            sc.plant.process_cov(),
            sc.plant.measurement_cov(),
        )?;
        let result = attack_run(sc, &s0, seed)?;
        let det = chi2_experiment(sc, &s0, traces)?;
        rows.push(SweepRow {
            s0_norm: norm,
            bound,
            epsilon,
            first_crossing: result.first_crossing,
            error_sum: det.evaluation.at_threshold.error_sum,
            error_sum_half_width: det.evaluation.at_threshold.half_width,
        });
    }
    Ok((ies, rows))
}
