//! The five subcommands. Each one loads a scenario file, applies the
//! command-line overrides, writes its outputs under the run directory and
//! finishes with `manifest.json`.
//!
//! | command  | outputs |
//! |----------|---------|
//! | simulate | `traces/nominal_NNNN.csv`, `report.json` |
//! | attack   | `traces/attack_NNNN.csv`, `report.json` |
//! | analyze  | `traces/attack_0000.csv`, `roc.csv`, `report.json` |
//! | detect   | `roc.csv`, `report.json` |
//! | sweep    | `sweep.csv`, `report.json` |

use std::fmt;
use std::path::{Path, PathBuf};

use fdia_core::detectors::{
    calibrate_threshold, gaussian_residual_hypotheses, likelihood_ratio_detector, Chi2Detector, CoinDetector,
    DetectorEvaluation,
};
use fdia_core::experiments::{
    analyze, attack_run, chi2_experiment, nominal_run, residual_ensembles, sweep, trace_seed, CampaignSummary, Role,
};
use fdia_core::scenarios::{build_scenario, modelling_notes, Scenario};
use fdia_core::stealth::error_sum;
use fdia_core::Error;

use crate::config::{parse_config, LoadedConfig};
use crate::error::{AppError, AppResult};
use crate::manifest::RunManifest;
use crate::report::{
    roc_rows, write_json, AnalysisReport, AttackReport, DetectReport, SimulateReport, SweepReport, TraceSummary,
};
use crate::traces::{emit_traces, TraceTable};

/// Residual steps seen by the likelihood-ratio test in `detect`.
pub const LR_WINDOW: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CommandKind {
    Simulate,
    Attack,
    Analyze,
    Detect,
    Sweep,
}

impl fmt::Display for CommandKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CommandKind::Simulate => "simulate",
            CommandKind::Attack => "attack",
            CommandKind::Analyze => "analyze",
            CommandKind::Detect => "detect",
            CommandKind::Sweep => "sweep",
        })
    }
}

#[derive(Clone, Debug)]
pub struct RunOptions {
    pub command: CommandKind,
    pub config: PathBuf,
    pub out: PathBuf,
    pub seed: u64,
    pub ensemble: Option<usize>,
    pub horizon: Option<usize>,
}

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub out: PathBuf,
    pub manifest: RunManifest,
    pub summary: String,
}

struct RunDir {
    root: PathBuf,
    written: Vec<String>,
}

impl RunDir {
    fn create(root: &Path) -> AppResult<Self> {
        std::fs::create_dir_all(root).map_err(|e| AppError::io(root, e))?;
        Ok(RunDir {
            root: root.to_path_buf(),
            written: Vec::new(),
        })
    }

    fn path(&mut self, relative: &str) -> AppResult<PathBuf> {
        let p = self.root.join(relative);
        if let Some(parent) = p.parent() {
            std::fs::create_dir_all(parent).map_err(|e| AppError::io(parent, e))?;
        }
        self.written.push(relative.to_string());
        Ok(p)
    }

    fn traces(&mut self, relative: &str, table: &TraceTable) -> AppResult<()> {
        let p = self.path(relative)?;
        emit_traces(table, &p)
    }

    fn json<T: serde::Serialize>(&mut self, relative: &str, value: &T) -> AppResult<()> {
        let p = self.path(relative)?;
        write_json(value, &p)
    }

    fn csv(&mut self, relative: &str, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> AppResult<()> {
        let p = self.path(relative)?;
        let fmt = |e: csv::Error| AppError::Format(format!("cannot write {relative}: {e}"));
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_path(&p)
            .map_err(fmt)?;
        w.write_record(header).map_err(fmt)?;
        for row in rows {
            w.write_record(&row).map_err(fmt)?;
        }
        w.flush().map_err(|e| AppError::io(&p, e))
    }
}

fn real(x: f64) -> String {
    format!("{x:.16e}")
}

fn load(opts: &RunOptions) -> AppResult<LoadedConfig> {
    let mut loaded = parse_config(&opts.config, opts.command == CommandKind::Detect)?;
    loaded.set_seed(opts.seed);
    if let Some(n) = opts.ensemble {
        loaded.set_ensemble(n)?;
    }
    if let Some(t) = opts.horizon {
        loaded.set_horizon(t)?;
    }
    loaded.config.validate(opts.command == CommandKind::Detect)?;
    Ok(loaded)
}

/// χ² threshold calibrated on the scenario's nominal calibration ensemble.
pub fn calibrated_threshold(sc: &Scenario) -> AppResult<f64> {
    let cfg = &sc.config;
    let scores = (0..cfg.detector.traces as u64)
        .map(|i| {
            let tr = nominal_run(sc, trace_seed(cfg.seed, Role::Calibration, i))?;
            Chi2Detector::score(cfg.detector.window, &tr.innovations)
        })
        .collect::<Result<Vec<_>, Error>>()?;
    Ok(calibrate_threshold(&scores, cfg.detector.false_alarm)?)
}

pub fn run(opts: &RunOptions) -> AppResult<RunOutcome> {
    let loaded = load(opts)?;
    let sc = build_scenario(&loaded.config)?;
    let mut dir = RunDir::create(&opts.out)?;
    let summary = match opts.command {
        CommandKind::Simulate => simulate(&sc, &mut dir)?,
        CommandKind::Attack => attack(&sc, &mut dir)?,
        CommandKind::Analyze => analyze_cmd(&sc, &mut dir)?,
        CommandKind::Detect => detect(&sc, &mut dir)?,
        CommandKind::Sweep => sweep_cmd(&sc, &mut dir)?,
    };
    let mut manifest = RunManifest::new(&opts.command.to_string(), &loaded.config, &loaded.provenance);
    for f in &dir.written {
        manifest.record(&dir.root, f)?;
    }
    manifest.write(&dir.root)?;
    Ok(RunOutcome {
        out: dir.root,
        manifest,
        summary,
    })
}

fn simulate(sc: &Scenario, dir: &mut RunDir) -> AppResult<String> {
    let cfg = &sc.config;
    let threshold = calibrated_threshold(sc)?;
    let det = Chi2Detector::new(cfg.detector.window, threshold)?;
    let metric = cfg.metric();
    let mut traces = Vec::with_capacity(cfg.ensemble);
    for i in 0..cfg.ensemble {
        let seed = trace_seed(cfg.seed, Role::Nominal, i as u64);
        let tr = nominal_run(sc, seed)?;
        let verdict = det.verdicts(&tr.innovations)?;
        let file = format!("traces/nominal_{i:04}.csv");
        dir.traces(&file, &TraceTable::from_trajectory(&tr, Some(&verdict.alarms)))?;
        traces.push(TraceSummary {
            index: i,
            seed,
            file,
            max_magnitude: tr.states.iter().map(|x| metric.eval(x)).fold(0.0, f64::max),
            diverged_at: tr.diverged_at,
            first_alarm: verdict.first_alarm,
        });
    }
    let exceeded = traces.iter().filter(|t| t.max_magnitude >= cfg.safe_radius).count();
    let report = SimulateReport {
        scenario: cfg.scenario.name().into(),
        threshold,
        traces,
        exceeded_safe_radius: exceeded,
    };
    dir.json("report.json", &report)?;
    Ok(format!("{} nominal traces, {exceeded} left the safe region", cfg.ensemble))
}

fn attack(sc: &Scenario, dir: &mut RunDir) -> AppResult<String> {
    let cfg = &sc.config;
    let threshold = calibrated_threshold(sc)?;
    let det = Chi2Detector::new(cfg.detector.window, threshold)?;
    let s0 = sc.attack_seed()?;
    let mut report = AttackReport {
        scenario: cfg.scenario.name().into(),
        threshold,
        campaigns: Vec::new(),
        files: Vec::new(),
        first_alarms: Vec::new(),
        successes: 0,
    };
    for i in 0..cfg.ensemble {
        let seed = trace_seed(cfg.seed, Role::Attack, i as u64);
        let r = attack_run(sc, &s0, seed)?;
        let verdict = det.verdicts(&r.attacked.innovations)?;
        let file = format!("traces/attack_{i:04}.csv");
        dir.traces(&file, &TraceTable::from_campaign(&r, Some(&verdict.alarms)))?;
        let summary = CampaignSummary::new(&r, sc, seed);
        if summary.first_crossing.is_some() && summary.counterfactual_max_magnitude < cfg.safe_radius {
            report.successes += 1;
        }
        report.campaigns.push(summary);
        report.files.push(file);
        report.first_alarms.push(verdict.first_alarm);
    }
    dir.json("report.json", &report)?;
    Ok(format!("{}/{} campaigns crossed alpha with a safe counterfactual", report.successes, cfg.ensemble))
}

fn write_roc(dir: &mut RunDir, ev: &DetectorEvaluation) -> AppResult<()> {
    let rows = roc_rows(ev).into_iter().map(|(t, f, d)| vec![real(t), real(f), real(d)]);
    dir.csv("roc.csv", &["threshold", "false_alarm", "detection"], rows)
}

fn analyze_cmd(sc: &Scenario, dir: &mut RunDir) -> AppResult<String> {
    let cfg = &sc.config;
    let analysis = analyze(sc, cfg.detector.traces)?;
    let s0 = sc.attack_seed()?;
    let detector = chi2_experiment(sc, &s0, cfg.detector.traces)?;
    let r = attack_run(sc, &s0, analysis.campaign.seed)?;
    let alarms = Chi2Detector::new(cfg.detector.window, detector.threshold)?.verdicts(&r.attacked.innovations)?;
    dir.traces("traces/attack_0000.csv", &TraceTable::from_campaign(&r, Some(&alarms.alarms)))?;
    write_roc(dir, &detector.evaluation)?;
    let report = AnalysisReport {
        scenario: cfg.scenario.name().into(),
        modelling_notes: modelling_notes(cfg),
        error_sum: detector.evaluation.at_threshold.clone(),
        detector,
        analysis,
    };
    debug_assert!(report.is_consistent());
    dir.json("report.json", &report)?;
    let eps = report
        .analysis
        .stealth
        .as_ref()
        .map_or_else(|| "n/a".to_string(), |s| format!("{:.3e}", s.epsilon));
    Ok(format!("verdict {:?}, epsilon {eps}, p^e {:.3}", report.analysis.verdict, report.error_sum.error_sum))
}

fn detect(sc: &Scenario, dir: &mut RunDir) -> AppResult<String> {
    let cfg = &sc.config;
    let traces = cfg.detector.traces;
    let s0 = sc.attack_seed()?;
    let chi2 = chi2_experiment(sc, &s0, traces)?;
    let coin = CoinDetector::new(cfg.seed);
    let coin_p: Vec<bool> = (0..traces as u64).map(|i| coin.verdict(2 * i)).collect();
    let coin_q: Vec<bool> = (0..traces as u64).map(|i| coin.verdict(2 * i + 1)).collect();
    let coin = error_sum(&coin_p, &coin_q)?;
    let lr_window = LR_WINDOW.min(cfg.horizon);
    let likelihood_ratio = match gaussian_residual_hypotheses(&sc.controller, &s0, lr_window) {
        Ok((h0, h1)) => {
            let (p, q) = residual_ensembles(sc, &s0, traces, lr_window)?;
            let decide = |o| likelihood_ratio_detector(&h0, &h1, o);
            let ap = p.iter().map(decide).collect::<Result<Vec<_>, Error>>()?;
            let aq = q.iter().map(decide).collect::<Result<Vec<_>, Error>>()?;
            Some(error_sum(&ap, &aq)?)
        }
        Err(Error::Unsupported(_)) => None,
        Err(e) => return Err(e.into()),
    };
    write_roc(dir, &chi2.evaluation)?;
    let report = DetectReport {
        scenario: cfg.scenario.name().into(),
        s0_norm: s0.norm(),
        chi2,
        coin,
        likelihood_ratio,
    };
    dir.json("report.json", &report)?;
    let at = &report.chi2.evaluation.at_threshold;
    Ok(format!("chi2 p^e {:.3} ± {:.3} (false alarm {:.3}, detection {:.3})", at.error_sum, at.half_width, at.false_alarm, at.detection_rate()))
}

fn sweep_cmd(sc: &Scenario, dir: &mut RunDir) -> AppResult<String> {
    let cfg = &sc.config;
    let (ies, rows) = sweep(sc, cfg.detector.traces)?;
    let table = rows.iter().map(|r| {
        vec![
            real(r.s0_norm),
            real(r.bound),
            real(r.epsilon),
            r.first_crossing.map_or_else(String::new, |t| t.to_string()),
            real(r.error_sum),
            real(r.error_sum_half_width),
        ]
    });
    dir.csv(
        "sweep.csv",
        &["s0_norm", "bound", "epsilon", "first_crossing", "error_sum", "error_sum_half_width"],
        table,
    )?;
    let n = rows.len();
    dir.json(
        "report.json",
        &SweepReport {
            scenario: cfg.scenario.name().into(),
            ies,
            rows,
        },
    )?;
    Ok(format!("{n} sweep points"))
}
