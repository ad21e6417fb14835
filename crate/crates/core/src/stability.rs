//! Incremental stability checks.
//!
//! The probes sample finitely many initial-condition pairs and can only
//! corroborate incremental exponential stability (IES) or incremental
//! instability (IU); they never prove either. For LTI systems the spectral
//! tests are exact.

use alloc::vec::Vec;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::controllers::{closed_loop_matrix, LtiController};
use crate::dynamics::{
    paired_rollout, simulate_closed_loop, ClosedLoop, Controller, IncrementalSystem, LinearDynamics, NoiseStream,
    PlantModel, SimulationOptions, StackedOpenLoop,
};
use crate::linalg::{ensure_shape, ensure_square, spectral_radius, unstable_directions, Matrix, Vector};
use crate::{Error, Result};

/// Distance to the unit circle below which spectral verdicts are withheld.
pub const SPECTRAL_MARGIN: f64 = 1e-9;
/// Minimum coefficient of determination for an IES-consistent verdict.
pub const MIN_R2: f64 = 0.9;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(rename_all = "kebab-case"))]
pub enum IesVerdict {
    IesConsistent,
    NotIes,
    Inconclusive,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(rename_all = "kebab-case"))]
pub enum IuVerdict {
    IuConsistent,
    Inconclusive,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(rename_all = "kebab-case"))]
pub enum Vulnerability {
    /// Both sufficient conditions hold (numerically or exactly).
    Vulnerable,
    /// At least one condition could not be confirmed; this is not a safety claim.
    ConditionNotVerified,
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct IesProbeSettings {
    pub pairs: usize,
    pub horizon: usize,
    pub radius: f64,
    pub seed: u64,
}

impl IesProbeSettings {
    pub fn new(radius: f64) -> Self {
        IesProbeSettings {
            pairs: 40,
            horizon: 1000,
            radius,
            seed: 0,
        }
    }
}

/// Log-linear fit `log‖ΔX_t‖ ≈ a − t·log λ` for one pair.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PairFit {
    pub initial_distance: f64,
    pub lambda: f64,
    pub r2: f64,
    /// Steps used by the fit.
    pub fitted_steps: usize,
    pub diverged: bool,
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct IesEstimate {
    pub kappa: f64,
    pub lambda: f64,
    pub min_r2: f64,
    pub pairs: usize,
    pub excluded_pairs: usize,
    pub horizon: usize,
    pub radius: f64,
    pub verdict: IesVerdict,
    pub fits: Vec<PairFit>,
}

fn random_unit<R: Rng>(rng: &mut R, dim: usize) -> Vector {
    loop {
        let v = Vector::from_fn(dim, |_, _| rng.sample::<f64, _>(StandardNormal));
        let n = v.norm();
        if n > 1e-12 {
            return v / n;
        }
    }
}

fn uniform_in_ball<R: Rng>(rng: &mut R, dim: usize, radius: f64) -> Vector {
    let r = radius * libm::pow(rng.random::<f64>(), 1.0 / dim as f64);
    random_unit(rng, dim) * r
}

/// Least-squares slope, intercept and R² of `y` against `0..len`.
fn linear_fit(y: &[f64]) -> (f64, f64, f64) {
    let n = y.len() as f64;
    let mean_t = (n - 1.0) / 2.0;
    let mean_y = y.iter().sum::<f64>() / n;
    let (mut sty, mut stt, mut syy) = (0.0, 0.0, 0.0);
    for (t, v) in y.iter().enumerate() {
        let dt = t as f64 - mean_t;
        let dy = v - mean_y;
        sty += dt * dy;
        stt += dt * dt;
        syy += dy * dy;
    }
    let slope = if stt > 0.0 { sty / stt } else { 0.0 };
    let r2 = if syy > 0.0 { (sty * sty) / (stt * syy) } else { 1.0 };
    (slope, mean_y - slope * mean_t, r2)
}

/// Prefix of `d` above the fitting floor `max(1e-9·d_0, 1e-12)`.
fn fit_prefix(d: &[f64]) -> usize {
    let floor = (1e-9 * d[0]).max(1e-12);
    d.iter().position(|&v| !(v > floor)).unwrap_or(d.len())
}

/// Paired rollouts with shared noise from pairs in the ball of radius `R`.
///
/// The first `2·dim` pairs (when available) are offset along `±` coordinate
/// axes, the rest along random directions; offset sizes are log-uniform in
/// `[1e-4·R, R]`. Reports the worst pair: `λ̂` is the smallest fitted decay
/// base and `κ̂ = max_t ‖ΔX_t‖ λ̂^t / ‖ΔX_0‖` over the fitted steps.
pub fn probe_ies<S: IncrementalSystem>(system: &S, settings: &IesProbeSettings) -> Result<IesEstimate> {
    if settings.pairs < 10 {
        return Err(Error::Config("IES probe needs at least 10 pairs".into()));
    }
    if settings.horizon < 50 {
        return Err(Error::Config("IES probe horizon must be at least 50 steps".into()));
    }
    if !(settings.radius > 0.0) || !settings.radius.is_finite() {
        return Err(Error::Config("probe radius must be positive".into()));
    }
    let dim = system.dim();
    let radius = settings.radius;
    let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
    let mut fits = Vec::with_capacity(settings.pairs);
    let mut curves: Vec<Vec<f64>> = Vec::with_capacity(settings.pairs);
    let mut excluded = 0;
    for i in 0..settings.pairs {
        let noise = NoiseStream::new(rng.next_u64());
        let dir = if i < 2 * dim {
            let mut e = Vector::zeros(dim);
            e[i / 2] = if i % 2 == 0 { 1.0 } else { -1.0 };
            e
        } else {
            random_unit(&mut rng, dim)
        };
        let size = radius * libm::pow(10.0, -4.0 * rng.random::<f64>());
        let mut delta = dir * size;
        let mut xi1 = uniform_in_ball(&mut rng, dim, radius);
        if (&xi1 + &delta).norm() > radius {
            delta = -delta;
        }
        if (&xi1 + &delta).norm() > radius {
            let room = (radius - size).max(0.0);
            let n1 = xi1.norm();
            if n1 > room {
                xi1 *= room / n1;
            }
        }
        let xi2 = &xi1 + &delta;
        let pr = paired_rollout(system, &noise, &xi1, &xi2, settings.horizon)?;
        let d = pr.difference_norms();
        if !(d[0] > 0.0) {
            excluded += 1;
            continue;
        }
        let diverged = pr.diverged_at.is_some();
        let len = fit_prefix(&d).max(2).min(d.len());
        let logs: Vec<f64> = d[..len].iter().map(|v| libm::log(*v)).collect();
        let (slope, _, r2) = linear_fit(&logs);
        fits.push(PairFit {
            initial_distance: d[0],
            lambda: libm::exp(-slope),
            r2,
            fitted_steps: len,
            diverged,
        });
        curves.push(d[..len].to_vec());
    }
    if fits.is_empty() {
        return Err(Error::Numerical("every IES probe pair was degenerate"));
    }
    let lambda = fits.iter().map(|f| f.lambda).fold(f64::INFINITY, f64::min);
    let min_r2 = fits.iter().map(|f| f.r2).fold(f64::INFINITY, f64::min);
    let mut kappa: f64 = 1.0;
    if lambda.is_finite() && lambda > 0.0 {
        let log_lambda = libm::log(lambda);
        for d in &curves {
            for (t, v) in d.iter().enumerate() {
                kappa = kappa.max(libm::exp(libm::log(v / d[0]) + t as f64 * log_lambda));
            }
        }
    }
    let verdict = if fits.iter().any(|f| f.diverged) || !(lambda > 1.0) {
        IesVerdict::NotIes
    } else if min_r2 < MIN_R2 {
        IesVerdict::Inconclusive
    } else {
        IesVerdict::IesConsistent
    };
    Ok(IesEstimate {
        kappa,
        lambda,
        min_r2,
        pairs: fits.len(),
        excluded_pairs: excluded,
        horizon: settings.horizon,
        radius,
        verdict,
        fits,
    })
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct IuProbeSettings {
    /// Number of sampled `ξ1`.
    pub samples: usize,
    pub horizon: usize,
    pub radius: f64,
    /// Divergence threshold `M`.
    pub threshold: f64,
    /// Offset magnitudes applied along each candidate direction with both signs.
    pub offsets: Vec<f64>,
    pub seed: u64,
}

impl IuProbeSettings {
    pub fn new(radius: f64, threshold: f64) -> Self {
        IuProbeSettings {
            samples: 20,
            horizon: 1000,
            radius,
            threshold,
            offsets: alloc::vec![1e-3, 1e-2, 1e-1],
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct IuProbe {
    pub xi1: Vec<f64>,
    pub reached: bool,
    /// Offset `ξ2 − ξ1` that first reached `M`.
    pub offset: Option<Vec<f64>>,
    pub crossing_time: Option<usize>,
    /// Mean growth of `log‖Δ_t‖` per step up to the crossing.
    pub growth_exponent: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct IuEstimate {
    pub threshold: f64,
    pub radius: f64,
    pub horizon: usize,
    pub probes: Vec<IuProbe>,
    pub verdict: IuVerdict,
}

/// Candidate offset directions: unstable eigenvectors of `∂f/∂x` at the
/// origin, or the coordinate axes when there are none.
pub fn iu_directions(plant: &PlantModel) -> Result<Vec<Vector>> {
    let n = plant.state_dim();
    let jac = plant.dynamics().state_jacobian(&Vector::zeros(n), &Vector::zeros(plant.input_dim()));
    let dirs = unstable_directions(&jac)?;
    if dirs.is_empty() {
        Ok((0..n)
            .map(|i| {
                let mut e = Vector::zeros(n);
                e[i] = 1.0;
                e
            })
            .collect())
    } else {
        Ok(dirs)
    }
}

/// Search the open-loop stacked system for diverging pairs.
///
/// For each sampled `ξ1`, a closed-loop rollout from `ξ1` supplies the input
/// sequence `u_t` and the noise `w_t`; the open-loop plant is then replayed
/// from `ξ1` and from `ξ1 + δ` for every candidate offset `δ`.
pub fn probe_iu<C: Controller>(plant: &PlantModel, ctrl: &C, settings: &IuProbeSettings) -> Result<IuEstimate> {
    if !(settings.threshold > 0.0) {
        return Err(Error::Config("divergence threshold M must be positive".into()));
    }
    if settings.offsets.is_empty() || settings.offsets.iter().any(|o| !(*o > 0.0)) {
        return Err(Error::Config("IU probe offsets must be nonzero".into()));
    }
    if settings.samples == 0 || settings.horizon == 0 {
        return Err(Error::Config("IU probe needs samples and a horizon".into()));
    }
    let n = plant.state_dim();
    let dirs = iu_directions(plant)?;
    let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
    let mut probes = Vec::with_capacity(settings.samples);
    for _ in 0..settings.samples {
        let noise = NoiseStream::new(rng.next_u64());
        let xi1 = uniform_in_ball(&mut rng, n, settings.radius);
        let opts = SimulationOptions::new(settings.horizon);
        let (nominal, _) = simulate_closed_loop(plant, ctrl, &xi1, &ctrl.initial_state(), &noise, &opts, None)?;
        let system = StackedOpenLoop {
            plant,
            inputs: nominal.inputs.clone(),
            start: 0,
        };
        let steps = nominal.steps();
        let mut probe = IuProbe {
            xi1: xi1.iter().copied().collect(),
            reached: false,
            offset: None,
            crossing_time: None,
            growth_exponent: None,
        };
        'search: for &mag in &settings.offsets {
            for dir in &dirs {
                for sign in [1.0, -1.0] {
                    let delta = dir * (sign * mag);
                    let pr = paired_rollout(&system, &noise, &xi1, &(&xi1 + &delta), steps)?;
                    let d = pr.difference_norms();
                    let hit = d.iter().position(|&v| v >= settings.threshold);
                    let crossing = hit.or_else(|| pr.diverged_at.map(|t| t + 1));
                    if let Some(t) = crossing {
                        let last = d[t.min(d.len() - 1)];
                        probe.reached = true;
                        probe.offset = Some(delta.iter().copied().collect());
                        probe.crossing_time = Some(t);
                        probe.growth_exponent = (t > 0).then(|| libm::log(last / d[0]) / t as f64);
                        break 'search;
                    }
                }
            }
        }
        probes.push(probe);
    }
    let verdict = if probes.iter().all(|p| p.reached) {
        IuVerdict::IuConsistent
    } else {
        IuVerdict::Inconclusive
    };
    Ok(IuEstimate {
        threshold: settings.threshold,
        radius: settings.radius,
        horizon: settings.horizon,
        probes,
        verdict,
    })
}

fn spectral_verdict(m: &Matrix) -> Result<f64> {
    ensure_square(m, "spectral test matrix")?;
    let rho = spectral_radius(m)?;
    if (rho - 1.0).abs() <= SPECTRAL_MARGIN {
        return Err(Error::Marginal(rho));
    }
    Ok(rho)
}

/// Exact IES test for `X' = M X + W`: spectral radius below one.
pub fn lti_is_ies(m: &Matrix) -> Result<bool> {
    Ok(spectral_verdict(m)? < 1.0)
}

/// Exact IU test for `x' = A x + B u + w`: an eigenvalue outside the unit circle.
pub fn lti_is_iu(a: &Matrix) -> Result<bool> {
    Ok(spectral_verdict(a)? > 1.0)
}

#[derive(Clone, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SensorSet {
    /// Zero-based sensor (output) indices.
    pub indices: Vec<usize>,
}

impl SensorSet {
    pub fn cardinality(&self) -> usize {
        self.indices.len()
    }
}

/// Indices where `|(C v)_i| > 1e-9` for the unit vector `v`.
pub fn sensor_support(c: &Matrix, v: &Vector) -> Vec<usize> {
    let v = v / v.norm();
    let cv = c * v;
    (0..cv.len()).filter(|&i| cv[i].abs() > 1e-9).collect()
}

/// Smallest `supp(C v)` over the real unstable eigen-directions `v` of `A`.
///
/// Directions whose support is empty (unstable modes invisible to every
/// sensor) need no sensor access and are skipped unless no other direction
/// exists. Ties are broken lexicographically.
pub fn min_compromised_sensors(a: &Matrix, c: &Matrix) -> Result<SensorSet> {
    let n = ensure_square(a, "state matrix A")?;
    ensure_shape(c, c.nrows(), n, "output matrix C")?;
    let dirs = unstable_directions(a)?;
    if dirs.is_empty() {
        return Err(Error::NotIncrementallyUnstable);
    }
    let mut supports: Vec<Vec<usize>> = dirs.iter().map(|v| sensor_support(c, v)).collect();
    if supports.iter().any(|s| !s.is_empty()) {
        supports.retain(|s| !s.is_empty());
    }
    supports.sort_by(|x, y| x.len().cmp(&y.len()).then_with(|| x.cmp(y)));
    Ok(SensorSet {
        indices: supports.swap_remove(0),
    })
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct VulnerabilityCheck {
    pub ies: IesEstimate,
    pub iu: IuEstimate,
    pub verdict: Vulnerability,
}

/// Probe the closed loop for IES and the open loop for IU.
pub fn check_vulnerability<C: Controller>(
    plant: &PlantModel,
    ctrl: &C,
    ies: &IesProbeSettings,
    iu: &IuProbeSettings,
) -> Result<VulnerabilityCheck> {
    let ies = probe_ies(&ClosedLoop::new(plant, ctrl), ies)?;
    let iu = probe_iu(plant, ctrl, iu)?;
    let verdict = if ies.verdict == IesVerdict::IesConsistent && iu.verdict == IuVerdict::IuConsistent {
        Vulnerability::Vulnerable
    } else {
        Vulnerability::ConditionNotVerified
    };
    Ok(VulnerabilityCheck { ies, iu, verdict })
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LtiVulnerabilityCheck {
    pub open_loop_radius: f64,
    pub closed_loop_radius: f64,
    /// `None` when the spectral radius is marginal.
    pub ies: Option<bool>,
    pub iu: Option<bool>,
    pub verdict: Vulnerability,
}

/// Exact check from the spectra of `A` and the closed-loop matrix.
pub fn check_vulnerability_lti(plant: &LinearDynamics, ctrl: &LtiController) -> Result<LtiVulnerabilityCheck> {
    let cl = closed_loop_matrix(plant, ctrl)?;
    let marginal_ok = |r: Result<bool>| match r {
        Ok(v) => Ok(Some(v)),
        Err(Error::Marginal(_)) => Ok(None),
        Err(e) => Err(e),
    };
    let ies = marginal_ok(lti_is_ies(&cl))?;
    let iu = marginal_ok(lti_is_iu(&plant.a))?;
    let verdict = if ies == Some(true) && iu == Some(true) {
        Vulnerability::Vulnerable
    } else {
        Vulnerability::ConditionNotVerified
    };
    Ok(LtiVulnerabilityCheck {
        open_loop_radius: spectral_radius(&plant.a)?,
        closed_loop_radius: spectral_radius(&cl)?,
        ies,
        iu,
        verdict,
    })
}
