//! Residual detectors and their evaluation.
//!
//! A detector maps a trace to a scalar score; the trace raises an alarm when
//! the score exceeds the threshold strictly. For the χ² detector the score is
//! the largest windowed statistic over the horizon, so a trace alarms as soon
//! as any step alarms.

use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::attack::{run_attack_campaign, CampaignSettings};
use crate::controllers::FeedbackController;
use crate::dynamics::{Innovation, NoiseStream};
use crate::linalg::{ensure_len, ensure_shape, symmetrize, Matrix, Vector};
use crate::stealth::{error_sum, ErrorSumEstimate};
use crate::{Error, Result};

/// `rᵀ S⁻¹ r`.
pub fn chi2_statistic(residual: &Vector, cov: &Matrix) -> Result<f64> {
    ensure_shape(cov, residual.len(), residual.len(), "innovation covariance")?;
    let chol = symmetrize(cov).cholesky().ok_or(Error::SingularInnovation)?;
    Ok(residual.dot(&chol.solve(residual)).max(0.0))
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Chi2Detector {
    pub window: usize,
    pub threshold: f64,
}

/// Per-step alarms of one trace.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VerdictTrace {
    pub alarms: Vec<bool>,
    pub first_alarm: Option<usize>,
}

impl VerdictTrace {
    pub fn from_alarms(alarms: Vec<bool>) -> Self {
        let first_alarm = alarms.iter().position(|&a| a);
        VerdictTrace { alarms, first_alarm }
    }

    pub fn detected(&self) -> bool {
        self.first_alarm.is_some()
    }
}

impl Chi2Detector {
    pub fn new(window: usize, threshold: f64) -> Result<Self> {
        if window == 0 {
            return Err(Error::Config("detector window must be at least 1".into()));
        }
        if !(threshold > 0.0) || !threshold.is_finite() {
            return Err(Error::Config("detector threshold must be positive and finite".into()));
        }
        Ok(Chi2Detector { window, threshold })
    }

    /// Per-step statistics `g_t`.
    pub fn statistics(innovations: &[Innovation]) -> Result<Vec<f64>> {
        innovations.iter().map(|i| chi2_statistic(&i.residual, &i.covariance)).collect()
    }

    /// Moving sums over `window` steps; entry `t` covers `t+1−W ..= t` and is
    /// `None` until the window is full.
    pub fn windowed(stats: &[f64], window: usize) -> Vec<Option<f64>> {
        let mut out = Vec::with_capacity(stats.len());
        let mut acc = 0.0;
        for (t, g) in stats.iter().enumerate() {
            acc += g;
            if t >= window {
                acc -= stats[t - window];
            }
            out.push((t + 1 >= window).then_some(acc));
        }
        out
    }

    /// Largest windowed statistic of a trace (`0` for traces shorter than the window).
    pub fn score(window: usize, innovations: &[Innovation]) -> Result<f64> {
        let stats = Self::statistics(innovations)?;
        Ok(Self::windowed(&stats, window).into_iter().flatten().fold(0.0, f64::max))
    }

    pub fn verdicts(&self, innovations: &[Innovation]) -> Result<VerdictTrace> {
        let stats = Self::statistics(innovations)?;
        let alarms = Self::windowed(&stats, self.window)
            .into_iter()
            .map(|g| g.is_some_and(|g| g > self.threshold))
            .collect();
        Ok(VerdictTrace::from_alarms(alarms))
    }
}

/// Nominal scores needed to calibrate a threshold for `target`: `⌈20/target⌉`,
/// so that about 20 calibration traces lie above it.
pub fn min_calibration_traces(target: f64) -> usize {
    libm::ceil(20.0 / target) as usize
}

/// Threshold whose exceedance rate on the nominal `scores` is `target`: the
/// empirical `(1 − target)` quantile. Needs at least `⌈20/target⌉` scores.
pub fn calibrate_threshold(scores: &[f64], target: f64) -> Result<f64> {
    if !(target > 0.0 && target <= 1.0) {
        return Err(Error::Config("target false-alarm rate must lie in (0, 1]".into()));
    }
    let needed = min_calibration_traces(target);
    if scores.len() < needed {
        return Err(Error::InsufficientCalibration { needed, got: scores.len() });
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::Numerical("non-finite calibration score"));
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let rank = libm::ceil((1.0 - target) * n as f64) as usize;
    Ok(sorted[rank.saturating_sub(1).min(n - 1)])
}

/// A Gaussian density for a stacked observation window.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianHypothesis {
    pub mean: Vector,
    pub cov: Matrix,
}

impl GaussianHypothesis {
    pub fn new(mean: Vector, cov: Matrix) -> Result<Self> {
        ensure_shape(&cov, mean.len(), mean.len(), "hypothesis covariance")?;
        if symmetrize(&cov).cholesky().is_none() {
            return Err(Error::NotPositiveDefinite("hypothesis covariance"));
        }
        Ok(GaussianHypothesis { mean, cov })
    }

    pub fn log_density(&self, x: &Vector) -> Result<f64> {
        ensure_len(x, self.mean.len(), "observation")?;
        let chol = symmetrize(&self.cov)
            .cholesky()
            .ok_or(Error::NotPositiveDefinite("hypothesis covariance"))?;
        let d = x - &self.mean;
        let maha = d.dot(&chol.solve(&d));
        let log_det: f64 = 2.0 * chol.l().diagonal().iter().map(|v| libm::log(*v)).sum::<f64>();
        let k = x.len() as f64;
        Ok(-0.5 * (maha + log_det + k * libm::log(2.0 * core::f64::consts::PI)))
    }
}

/// `log q(y) − log p(y)`.
pub fn log_likelihood_ratio(p: &GaussianHypothesis, q: &GaussianHypothesis, obs: &Vector) -> Result<f64> {
    Ok(q.log_density(obs)? - p.log_density(obs)?)
}

/// Equal-prior Neyman–Pearson test: alarm iff `log q/p > 0`.
pub fn likelihood_ratio_detector(p: &GaussianHypothesis, q: &GaussianHypothesis, obs: &Vector) -> Result<bool> {
    Ok(log_likelihood_ratio(p, q, obs)? > 0.0)
}

/// Stacked innovations `(r_0, …, r_{W−1})` of a trace.
pub fn residual_window(innovations: &[Innovation], window: usize) -> Result<Vector> {
    if innovations.len() < window {
        return Err(Error::InsufficientSamples { needed: window, got: innovations.len() });
    }
    let p = innovations.first().map_or(0, |i| i.residual.len());
    let mut out = Vector::zeros(p * window);
    for (t, inn) in innovations.iter().take(window).enumerate() {
        ensure_len(&inn.residual, p, "residual")?;
        out.rows_mut(t * p, p).copy_from(&inn.residual);
    }
    Ok(out)
}

/// Exact densities of the first `window` innovations without (P) and with
/// (Q) the attack, for a linear plant under a steady-state filter started at
/// the origin: both are Gaussian with the same block-diagonal covariance, and
/// Q's mean is the noise-free innovation response to the attack.
pub fn gaussian_residual_hypotheses(
    ctrl: &FeedbackController,
    s0: &Vector,
    window: usize,
) -> Result<(GaussianHypothesis, GaussianHypothesis)> {
    let plant = ctrl.plant();
    if plant.dynamics().as_linear().is_none() {
        return Err(Error::Unsupported("known-Gaussian residual densities require a linear plant"));
    }
    if window == 0 {
        return Err(Error::Config("residual window must be at least 1".into()));
    }
    let mut settings = CampaignSettings::new(window, f64::MAX / 1e3);
    settings.pre_roll = 0;
    let silent = run_attack_campaign(plant, ctrl, s0, &NoiseStream::silent(), &settings)?;
    let mean = residual_window(&silent.attacked.innovations, window)?;
    // The filter starts at its stationary covariance, so S is constant.
    let s = silent.attacked.innovations[0].covariance.clone();
    let last = &silent.attacked.innovations[window - 1].covariance;
    if (last - &s).amax() > 1e-9 * s.amax().max(1.0) {
        return Err(Error::Unsupported("known-Gaussian residual densities require a steady-state filter"));
    }
    let p = s.nrows();
    let mut cov = Matrix::zeros(p * window, p * window);
    for t in 0..window {
        cov.view_mut((t * p, t * p), (p, p)).copy_from(&s);
    }
    let null = GaussianHypothesis::new(Vector::zeros(p * window), cov.clone())?;
    let attacked = GaussianHypothesis::new(mean, cov)?;
    Ok((null, attacked))
}

/// Alarms with probability `rate`, independently of the data; trace `i`
/// always gets the same verdict for a given seed.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CoinDetector {
    pub seed: u64,
    pub rate: f64,
}

impl CoinDetector {
    pub fn new(seed: u64) -> Self {
        CoinDetector { seed, rate: 0.5 }
    }

    pub fn verdict(&self, trace: u64) -> bool {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(trace);
        rng.random::<f64>() < self.rate
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RocPoint {
    pub threshold: f64,
    pub false_alarm: f64,
    pub detection: f64,
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DetectorEvaluation {
    /// Ordered by increasing false-alarm rate, from `(0,0)` to `(1,1)`.
    pub roc: Vec<RocPoint>,
    pub auc: f64,
    pub threshold: f64,
    pub at_threshold: ErrorSumEstimate,
}

fn exceed_count(sorted: &[f64], tau: f64) -> usize {
    sorted.len() - sorted.partition_point(|&s| s <= tau)
}

/// ROC sweep over every observed score plus `p^e` at `threshold`.
pub fn evaluate_detector(scores_p: &[f64], scores_q: &[f64], threshold: f64) -> Result<DetectorEvaluation> {
    let alarms_p: Vec<bool> = scores_p.iter().map(|&s| s > threshold).collect();
    let alarms_q: Vec<bool> = scores_q.iter().map(|&s| s > threshold).collect();
    let at_threshold = error_sum(&alarms_p, &alarms_q)?;
    let mut sp = scores_p.to_vec();
    let mut sq = scores_q.to_vec();
    sp.sort_by(f64::total_cmp);
    sq.sort_by(f64::total_cmp);
    let mut taus: Vec<f64> = sp.iter().chain(&sq).copied().collect();
    taus.sort_by(|a, b| b.total_cmp(a));
    taus.dedup();
    let (np, nq) = (sp.len() as f64, sq.len() as f64);
    let mut roc = Vec::with_capacity(taus.len() + 2);
    roc.push(RocPoint {
        threshold: f64::INFINITY,
        false_alarm: 0.0,
        detection: 0.0,
    });
    for &tau in &taus {
        roc.push(RocPoint {
            threshold: tau,
            false_alarm: exceed_count(&sp, tau) as f64 / np,
            detection: exceed_count(&sq, tau) as f64 / nq,
        });
    }
    roc.push(RocPoint {
        threshold: f64::NEG_INFINITY,
        false_alarm: 1.0,
        detection: 1.0,
    });
    let auc = roc
        .windows(2)
        .map(|w| (w[1].false_alarm - w[0].false_alarm) * 0.5 * (w[0].detection + w[1].detection))
        .sum();
    Ok(DetectorEvaluation {
        roc,
        auc,
        threshold,
        at_threshold,
    })
}
