//! JSON reports written by the subcommands.

use std::path::Path;

use fdia_core::detectors::DetectorEvaluation;
use fdia_core::experiments::{Analysis, CampaignSummary, DetectionExperiment, SweepRow};
use fdia_core::stability::IesEstimate;
use fdia_core::stealth::{epsilon_from_kl, ErrorSumEstimate};
use serde::Serialize;

use crate::error::{AppError, AppResult};

/// Analysis of one scenario: probes, verdict, stealth certificate, one
/// campaign and the χ² detector's error sum.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AnalysisReport {
    pub scenario: String,
    pub modelling_notes: Vec<String>,
    #[serde(flatten)]
    pub analysis: Analysis,
    pub error_sum: ErrorSumEstimate,
    pub detector: DetectionExperiment,
}

impl AnalysisReport {
    /// The reported ε is the closed form of the reported bound.
    pub fn is_consistent(&self) -> bool {
        self.analysis
            .stealth
            .as_ref()
            .is_none_or(|s| (epsilon_from_kl(s.bound) - s.epsilon).abs() <= 1e-12)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TraceSummary {
    pub index: usize,
    pub seed: u64,
    pub file: String,
    pub max_magnitude: f64,
    pub diverged_at: Option<usize>,
    pub first_alarm: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SimulateReport {
    pub scenario: String,
    pub threshold: f64,
    pub traces: Vec<TraceSummary>,
    pub exceeded_safe_radius: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AttackReport {
    pub scenario: String,
    pub threshold: f64,
    pub campaigns: Vec<CampaignSummary>,
    pub files: Vec<String>,
    pub first_alarms: Vec<Option<usize>>,
    /// Campaigns that crossed α while the counterfactual stayed safe.
    pub successes: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DetectReport {
    pub scenario: String,
    pub s0_norm: f64,
    pub chi2: DetectionExperiment,
    /// Data-independent fair coin on the same ensembles.
    pub coin: ErrorSumEstimate,
    /// Likelihood-ratio test on the exact residual densities (linear plants).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub likelihood_ratio: Option<ErrorSumEstimate>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepReport {
    pub scenario: String,
    pub ies: IesEstimate,
    pub rows: Vec<SweepRow>,
}

/// ROC curve as a table, for plotting.
pub fn roc_rows(ev: &DetectorEvaluation) -> Vec<(f64, f64, f64)> {
    ev.roc.iter().map(|p| (p.threshold, p.false_alarm, p.detection)).collect()
}

pub fn write_json<T: Serialize>(value: &T, path: &Path) -> AppResult<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| AppError::Format(format!("cannot encode report: {e}")))?;
    std::fs::write(path, text + "\n").map_err(|e| AppError::io(path, e))
}
