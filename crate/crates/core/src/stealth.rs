//! Stealthiness certificates and measurements.
//!
//! The per-step terms follow the bound as stated, `Δᵀ Σ⁻¹ Δ`, without the
//! `½` of the Gaussian KL divergence; sums of them are therefore valid but
//! twice-loose upper bounds on the true divergence.

use alloc::vec::Vec;

use crate::attack::CampaignResult;
use crate::dynamics::PlantModel;
use crate::linalg::{ensure_len, lambda_max_of_inverse, psd_factor, quad_form_inv, Matrix, Vector};
use crate::{Error, Result};

/// Note attached to every [`StealthReport`].
pub const HALF_FACTOR_NOTE: &str =
    "per-step terms are (x-e)^T S^-1 (x-e) without the 1/2 of the Gaussian KL; the bound is looser by a factor 2";

/// Default neighbour count for [`empirical_kl`].
pub const DEFAULT_K: usize = 5;
/// Minimum sample count per set for [`empirical_kl`].
pub const MIN_KL_SAMPLES: usize = 50;
/// Minimum trace count per ensemble for [`error_sum`].
pub const MIN_ENSEMBLE: usize = 100;
/// Two-sided 95% standard normal quantile.
pub const Z95: f64 = 1.959963984540054;

/// `Δᵀ Σw⁻¹ Δ`.
pub fn kl_state_term(delta: &Vector, process_cov: &Matrix) -> Result<f64> {
    ensure_len(delta, process_cov.nrows(), "state difference")?;
    quad_form_inv(delta, process_cov)
}

/// `Δyᵀ Σv⁻¹ Δy` on the realized output difference.
pub fn kl_measurement_term(delta_y: &Vector, measurement_cov: &Matrix) -> Result<f64> {
    ensure_len(delta_y, measurement_cov.nrows(), "output difference")?;
    quad_form_inv(delta_y, measurement_cov)
}

/// Closed-form bound
/// `b = κ²‖s_0‖² / (1 − λ⁻²) · (λ_max(Σw⁻¹) + L_h² λ_max(Σv⁻¹))`
/// and `ε = √(1 − e^{−b})`.
pub fn stealth_bound(
    kappa: f64,
    lambda: f64,
    s0_norm: f64,
    output_lipschitz: f64,
    process_cov: &Matrix,
    measurement_cov: &Matrix,
) -> Result<(f64, f64)> {
    if !(lambda > 1.0) || !lambda.is_finite() {
        return Err(Error::BoundVoid);
    }
    if !(kappa >= 1.0) || !kappa.is_finite() {
        return Err(Error::Config("overshoot constant kappa must be at least 1".into()));
    }
    if !(s0_norm >= 0.0) || !s0_norm.is_finite() {
        return Err(Error::Config("attack seed norm must be finite and nonnegative".into()));
    }
    let geometric = 1.0 / (1.0 - 1.0 / (lambda * lambda));
    let noise = lambda_max_of_inverse(process_cov)? + output_lipschitz * output_lipschitz * lambda_max_of_inverse(measurement_cov)?;
    let b = kappa * kappa * s0_norm * s0_norm * geometric * noise;
    Ok((b, epsilon_from_kl(b)))
}

/// `ε = √(1 − e^{−kl})`; negative estimates are treated as zero.
pub fn epsilon_from_kl(kl: f64) -> f64 {
    if kl.is_nan() {
        return f64::NAN;
    }
    if kl == f64::INFINITY {
        return 1.0;
    }
    libm::sqrt(-libm::expm1(-kl.max(0.0)))
}

/// Per-step `(d^w_t, d^v_t)` along a campaign: the state term on
/// `x_t − e_t` and the measurement term on `h(x_t) − h(e_t)`.
pub fn campaign_kl_terms(result: &CampaignResult, plant: &PlantModel) -> Result<(Vec<f64>, Vec<f64>)> {
    let d = plant.dynamics();
    let len = result.state_gap.len();
    let mut state = Vec::with_capacity(len);
    let mut meas = Vec::with_capacity(len);
    for t in 0..len {
        let x = &result.counterfactual.states[t];
        let e = &result.virtual_states[t];
        state.push(kl_state_term(&(x - e), plant.process_cov())?);
        meas.push(kl_measurement_term(&(d.output(x) - d.output(e)), plant.measurement_cov())?);
    }
    Ok((state, meas))
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct KlEstimate {
    pub value: f64,
    pub k: usize,
    pub p_samples: usize,
    pub q_samples: usize,
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct StealthReport {
    pub state_terms: Vec<f64>,
    pub measurement_terms: Vec<f64>,
    pub realized_sum: f64,
    pub kappa: f64,
    pub lambda: f64,
    pub s0_norm: f64,
    pub bound: f64,
    pub epsilon: f64,
    pub empirical: Option<KlEstimate>,
    pub note: alloc::string::String,
}

impl StealthReport {
    /// Terms from the campaign and `(b_ε, ε)` from the supplied `(κ, λ)`.
    pub fn from_campaign(result: &CampaignResult, plant: &PlantModel, kappa: f64, lambda: f64) -> Result<Self> {
        let (state_terms, measurement_terms) = campaign_kl_terms(result, plant)?;
        let realized_sum = state_terms.iter().chain(&measurement_terms).sum();
        let s0_norm = result.s0.norm();
        let (bound, epsilon) = stealth_bound(
            kappa,
            lambda,
            s0_norm,
            plant.output_lipschitz(),
            plant.process_cov(),
            plant.measurement_cov(),
        )?;
        Ok(StealthReport {
            state_terms,
            measurement_terms,
            realized_sum,
            kappa,
            lambda,
            s0_norm,
            bound,
            epsilon,
            empirical: None,
            note: HALF_FACTOR_NOTE.into(),
        })
    }
}

fn sample_dim(samples: &[Vector]) -> Option<usize> {
    samples.first().map(|v| v.len())
}

/// Whitening map from the P-sample mean and covariance.
fn whitener(p: &[Vector]) -> Result<(Vector, Matrix)> {
    let d = p[0].len();
    let n = p.len() as f64;
    let mean = p.iter().fold(Vector::zeros(d), |acc, v| acc + v) / n;
    let mut cov = Matrix::zeros(d, d);
    for v in p {
        let c = v - &mean;
        cov += &c * c.transpose();
    }
    cov /= n - 1.0;
    let factor = psd_factor(&cov)?;
    let inv = factor
        .try_inverse()
        .ok_or(Error::Numerical("P samples are degenerate; cannot whiten"))?;
    Ok((mean, inv))
}

/// Points sorted by their first coordinate, for pruned neighbour search.
struct SortedSet {
    points: Vec<Vec<f64>>,
}

impl SortedSet {
    fn new(mut points: Vec<Vec<f64>>) -> Self {
        points.sort_by(|a, b| a[0].total_cmp(&b[0]));
        SortedSet { points }
    }

    /// Distance from `q` to its k-th nearest point, skipping one exact
    /// self-match when `exclude_self` is set.
    fn kth_distance(&self, q: &[f64], k: usize, exclude_self: bool) -> f64 {
        let pts = &self.points;
        let start = pts.partition_point(|p| p[0] < q[0]);
        // Squared distances of the best k so far, ascending.
        let mut best: Vec<f64> = Vec::with_capacity(k + 1);
        let mut skipped = !exclude_self;
        let mut consider = |p: &Vec<f64>, best: &mut Vec<f64>| {
            let d2: f64 = p.iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum();
            if !skipped && d2 == 0.0 && p.as_slice() == q {
                skipped = true;
                return;
            }
            if best.len() < k || d2 < best[best.len() - 1] {
                let pos = best.partition_point(|&b| b <= d2);
                best.insert(pos, d2);
                best.truncate(k);
            }
        };
        let (mut lo, mut hi) = (start, start);
        loop {
            let bound = if best.len() == k { best[k - 1] } else { f64::INFINITY };
            let left = (lo > 0).then(|| {
                let g = q[0] - pts[lo - 1][0];
                g * g
            });
            let right = (hi < pts.len()).then(|| {
                let g = pts[hi][0] - q[0];
                g * g
            });
            match (left, right) {
                (None, None) => break,
                (Some(l), r) if r.is_none_or(|r| l <= r) => {
                    if l > bound {
                        break;
                    }
                    lo -= 1;
                    consider(&pts[lo], &mut best);
                }
                (_, Some(r)) => {
                    if r > bound {
                        break;
                    }
                    consider(&pts[hi], &mut best);
                    hi += 1;
                }
                _ => unreachable!(),
            }
        }
        best.get(k - 1).map_or(f64::INFINITY, |d2| libm::sqrt(*d2))
    }
}

/// Exact duplicates in the pooled sample get distinct shifts of `1e-12`.
fn jitter_duplicates(p: &mut [Vec<f64>], q: &mut [Vec<f64>]) {
    let mut index: Vec<(bool, usize)> = (0..p.len()).map(|i| (false, i)).chain((0..q.len()).map(|i| (true, i))).collect();
    let get = |p: &[Vec<f64>], q: &[Vec<f64>], (is_q, i): (bool, usize)| -> Vec<f64> {
        if is_q {
            q[i].clone()
        } else {
            p[i].clone()
        }
    };
    index.sort_by(|&a, &b| {
        let (va, vb) = (get(p, q, a), get(p, q, b));
        va.iter()
            .zip(&vb)
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(core::cmp::Ordering::Equal)
    });
    let mut run = 0usize;
    let mut prev: Option<Vec<f64>> = None;
    for &id in &index {
        let v = get(p, q, id);
        if prev.as_ref() == Some(&v) {
            run += 1;
            let target = if id.0 { &mut q[id.1] } else { &mut p[id.1] };
            for c in target.iter_mut() {
                *c += 1e-12 * run as f64;
            }
        } else {
            run = 0;
            prev = Some(v);
        }
    }
}

/// k-nearest-neighbour estimate of `KL(Q ‖ P)` from samples of both.
///
/// `D̂ = (d/n) Σ_i log(ν_k(i)/ρ_k(i)) + log(m/(n−1))` with `ρ_k` the distance
/// from `q_i` to its k-th neighbour among the other Q samples and `ν_k` to
/// its k-th neighbour among the P samples. Both sets are first whitened with
/// the P-sample covariance.
pub fn empirical_kl(p_samples: &[Vector], q_samples: &[Vector], k: usize) -> Result<KlEstimate> {
    let (m, n) = (p_samples.len(), q_samples.len());
    let needed = MIN_KL_SAMPLES.max(k + 2);
    if m < needed {
        return Err(Error::InsufficientSamples { needed, got: m });
    }
    if n < needed {
        return Err(Error::InsufficientSamples { needed, got: n });
    }
    if k == 0 {
        return Err(Error::Config("neighbour count k must be at least 1".into()));
    }
    let d = sample_dim(p_samples).unwrap_or(0);
    if d == 0 {
        return Err(Error::Config("samples must have positive dimension".into()));
    }
    for v in p_samples.iter().chain(q_samples) {
        ensure_len(v, d, "KL sample")?;
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::Numerical("non-finite KL sample"));
        }
    }
    let (mean, w) = whitener(p_samples)?;
    let white = |s: &[Vector]| -> Vec<Vec<f64>> { s.iter().map(|v| (&w * (v - &mean)).iter().copied().collect()).collect() };
    let (mut wp, mut wq) = (white(p_samples), white(q_samples));
    jitter_duplicates(&mut wp, &mut wq);
    let p_set = SortedSet::new(wp);
    let q_set = SortedSet::new(wq);
    let mut acc = 0.0;
    for q in &q_set.points {
        let rho = q_set.kth_distance(q, k, true);
        let nu = p_set.kth_distance(q, k, false);
        acc += libm::log(nu / rho);
    }
    let value = (d as f64) * acc / (n as f64) + libm::log(m as f64 / (n as f64 - 1.0));
    Ok(KlEstimate {
        value,
        k,
        p_samples: m,
        q_samples: n,
    })
}

/// Empirical `p^e = P(D=0 | Q) + P(D=1 | P)` with 95% normal-approximation
/// half-widths.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ErrorSumEstimate {
    pub false_alarm: f64,
    pub miss: f64,
    pub error_sum: f64,
    pub p_traces: usize,
    pub q_traces: usize,
    pub false_alarm_half_width: f64,
    pub miss_half_width: f64,
    /// Half-width for `p^e` (independent ensembles).
    pub half_width: f64,
}

impl ErrorSumEstimate {
    pub fn detection_rate(&self) -> f64 {
        1.0 - self.miss
    }
}

/// 95% normal-approximation half-width of a binomial rate estimate.
pub fn binomial_half_width(rate: f64, n: usize) -> f64 {
    Z95 * libm::sqrt(rate * (1.0 - rate) / n as f64)
}

/// `alarms_p`: verdicts on attack-free traces; `alarms_q`: on attacked traces.
pub fn error_sum(alarms_p: &[bool], alarms_q: &[bool]) -> Result<ErrorSumEstimate> {
    for len in [alarms_p.len(), alarms_q.len()] {
        if len < MIN_ENSEMBLE {
            return Err(Error::InsufficientSamples { needed: MIN_ENSEMBLE, got: len });
        }
    }
    let (np, nq) = (alarms_p.len(), alarms_q.len());
    let false_alarm = alarms_p.iter().filter(|&&a| a).count() as f64 / np as f64;
    let miss = alarms_q.iter().filter(|&&a| !a).count() as f64 / nq as f64;
    Ok(ErrorSumEstimate {
        false_alarm,
        miss,
        error_sum: false_alarm + miss,
        p_traces: np,
        q_traces: nq,
        false_alarm_half_width: binomial_half_width(false_alarm, np),
        miss_half_width: binomial_half_width(miss, nq),
        half_width: Z95 * libm::sqrt(false_alarm * (1.0 - false_alarm) / np as f64 + miss * (1.0 - miss) / nq as f64),
    })
}
