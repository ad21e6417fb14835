//! Ready-to-run scenarios.
//!
//! * The inverted pendulum `θ̈ = (g/r) sin θ − b/(m r²) θ̇ + L/(m r²)`,
//!   forward-Euler discretized, both states measured, estimated by an EKF
//!   and stabilized by discrete LQR on the upright linearization. The default
//!   cost `Q = diag(1000, 1)`, `R = 1` keeps the angle inside the safe set
//!   under the default noise; `Q = I` does not.
//! * A scalar unstable LTI bench (`A = 2`) with an observer-based stabilizer.
//! * A scalar stable bench (`A = 0.5`) as a negative control.
//! * A general LTI plant given by its matrices.

use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::attack::{default_attack_seed, CampaignSettings, GeneratorKind, SafetyMetric};
use crate::controllers::FeedbackController;
use crate::dynamics::{Dynamics, LinearDynamics, PlantModel};
use crate::linalg::{canonical_sign, lqr_gain, matrix_from_rows, Matrix, Vector};
use crate::stability::{IesProbeSettings, IuProbeSettings};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(deny_unknown_fields))]
pub struct PendulumParams {
    pub g: f64,
    pub m: f64,
    pub b: f64,
    pub r: f64,
    /// Sample period in seconds.
    pub ts: f64,
    /// Diagonal of the process-noise covariance.
    pub process_var: f64,
    /// Diagonal of the measurement-noise covariance.
    pub measurement_var: f64,
}

impl Default for PendulumParams {
    fn default() -> Self {
        PendulumParams {
            g: 9.8,
            m: 0.2,
            b: 0.1,
            r: 0.3,
            ts: 0.01,
            process_var: 0.01,
            measurement_var: 0.01,
        }
    }
}

impl PendulumParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.ts > 0.0) || !self.ts.is_finite() {
            return Err(Error::Config("pendulum sample period ts must be positive".into()));
        }
        for (name, v) in [("g", self.g), ("m", self.m), ("r", self.r)] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Config(alloc::format!("pendulum parameter {name} must be positive")));
            }
        }
        if !(self.b >= 0.0) || !self.b.is_finite() {
            return Err(Error::Config("pendulum friction b must be nonnegative".into()));
        }
        if !(self.process_var >= 0.0 && self.measurement_var >= 0.0) {
            return Err(Error::Config("pendulum noise variances must be nonnegative".into()));
        }
        Ok(())
    }
}

/// Euler-discretized pendulum with state `(θ, θ̇)`, torque input and `h = id`.
#[derive(Clone, Debug, PartialEq)]
pub struct PendulumDynamics {
    pub params: PendulumParams,
}

impl PendulumDynamics {
    fn gravity(&self) -> f64 {
        self.params.g / self.params.r
    }
    fn damping(&self) -> f64 {
        self.params.b / (self.params.m * self.params.r * self.params.r)
    }
    fn input_gain(&self) -> f64 {
        1.0 / (self.params.m * self.params.r * self.params.r)
    }

    /// Input matrix of the discretized model.
    pub fn input_matrix(&self) -> Matrix {
        Matrix::from_row_slice(2, 1, &[0.0, self.params.ts * self.input_gain()])
    }
}

impl Dynamics for PendulumDynamics {
    fn state_dim(&self) -> usize {
        2
    }
    fn input_dim(&self) -> usize {
        1
    }
    fn output_dim(&self) -> usize {
        2
    }
    fn transition(&self, x: &Vector, u: &Vector) -> Vector {
        let ts = self.params.ts;
        let acc = self.gravity() * libm::sin(x[0]) - self.damping() * x[1] + self.input_gain() * u[0];
        Vector::from_vec(vec![x[0] + ts * x[1], x[1] + ts * acc])
    }
    fn output(&self, x: &Vector) -> Vector {
        x.clone()
    }
    fn state_jacobian(&self, x: &Vector, _u: &Vector) -> Matrix {
        let ts = self.params.ts;
        Matrix::from_row_slice(2, 2, &[1.0, ts, ts * self.gravity() * libm::cos(x[0]), 1.0 - ts * self.damping()])
    }
    fn output_jacobian(&self, _x: &Vector) -> Matrix {
        Matrix::identity(2, 2)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(rename_all = "kebab-case"))]
pub enum ScenarioKind {
    Pendulum,
    ScalarLti,
    NullBench,
    Lti,
}

impl ScenarioKind {
    pub fn name(&self) -> &'static str {
        match self {
            ScenarioKind::Pendulum => "pendulum",
            ScenarioKind::ScalarLti => "scalar-lti",
            ScenarioKind::NullBench => "null-bench",
            ScenarioKind::Lti => "lti",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(rename_all = "kebab-case"))]
pub enum ControllerKind {
    /// Discrete LQR on the linearization at the origin.
    Lqr,
    /// Explicit state-feedback gain.
    Gain,
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(deny_unknown_fields))]
pub struct ControllerConfig {
    pub kind: ControllerKind,
    /// Diagonal of the LQR state cost; empty means identity.
    pub state_weights: Vec<f64>,
    /// LQR input cost `r·I`.
    pub input_weight: f64,
    /// Rows of `K` for `u = −K x̂`.
    #[cfg_attr(feature = "serde", serde(default, skip_serializing_if = "Option::is_none"))]
    pub gain: Option<Vec<Vec<f64>>>,
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(deny_unknown_fields))]
pub struct LtiParams {
    pub a: Vec<Vec<f64>>,
    pub b: Vec<Vec<f64>>,
    pub c: Vec<Vec<f64>>,
    pub process_cov: Vec<Vec<f64>>,
    pub measurement_cov: Vec<Vec<f64>>,
}

impl LtiParams {
    pub fn scalar(a: f64) -> Self {
        LtiParams {
            a: vec![vec![a]],
            b: vec![vec![1.0]],
            c: vec![vec![1.0]],
            process_cov: vec![vec![0.01]],
            measurement_cov: vec![vec![0.01]],
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(deny_unknown_fields))]
pub struct AttackConfig {
    /// `‖s_0‖`.
    pub s0_norm: f64,
    /// Direction of `s_0`; defaults to the dominant eigenvector at the origin.
    #[cfg_attr(feature = "serde", serde(default, skip_serializing_if = "Option::is_none"))]
    pub direction: Option<Vec<f64>>,
    pub generator: GeneratorKind,
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(deny_unknown_fields))]
pub struct DetectorConfig {
    pub window: usize,
    pub false_alarm: f64,
    /// Traces per ensemble for calibration and evaluation.
    pub traces: usize,
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(deny_unknown_fields))]
pub struct ProbeConfig {
    pub ies_pairs: usize,
    pub ies_horizon: usize,
    pub iu_samples: usize,
    pub iu_horizon: usize,
    /// Divergence threshold `M`.
    pub iu_threshold: f64,
    /// Multiplicative slack on the probed `κ̂` when certifying a campaign.
    pub kappa_slack: f64,
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(deny_unknown_fields))]
pub struct SweepConfig {
    pub s0_norms: Vec<f64>,
}

/// A complete, pure-data scenario description.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(deny_unknown_fields))]
pub struct ScenarioConfig {
    pub scenario: ScenarioKind,
    pub horizon: usize,
    pub pre_roll: usize,
    pub seed: u64,
    pub ensemble: usize,
    /// Unsafe threshold `α`.
    pub alpha: f64,
    /// Safe radius `R_S`.
    pub safe_radius: f64,
    /// Measure safety on one coordinate instead of the Euclidean norm.
    #[cfg_attr(feature = "serde", serde(default, skip_serializing_if = "Option::is_none"))]
    pub safety_coordinate: Option<usize>,
    pub attack: AttackConfig,
    pub pendulum: PendulumParams,
    pub lti: LtiParams,
    pub controller: ControllerConfig,
    pub detector: DetectorConfig,
    pub probe: ProbeConfig,
    pub sweep: SweepConfig,
}

impl ScenarioConfig {
    pub fn defaults(kind: ScenarioKind) -> Self {
        let detector = DetectorConfig {
            window: 1,
            false_alarm: 0.05,
            traces: 500,
        };
        let attack = |s0_norm| AttackConfig {
            s0_norm,
            direction: None,
            generator: GeneratorKind::FullKnowledge,
        };
        let sweep = SweepConfig {
            s0_norms: vec![1e-4, 1e-3, 1e-2, 1e-1],
        };
        let gain = |k: f64| ControllerConfig {
            kind: ControllerKind::Gain,
            state_weights: Vec::new(),
            input_weight: 1.0,
            gain: Some(vec![vec![k]]),
        };
        let lti_probe = ProbeConfig {
            ies_pairs: 40,
            ies_horizon: 200,
            iu_samples: 20,
            iu_horizon: 200,
            iu_threshold: 1e3,
            kappa_slack: 1.5,
        };
        match kind {
            ScenarioKind::Pendulum => {
                let rs = PI / 3.0;
                ScenarioConfig {
                    scenario: kind,
                    horizon: 3000,
                    pre_roll: 200,
                    seed: 0,
                    ensemble: 100,
                    alpha: rs + 0.1,
                    safe_radius: rs,
                    safety_coordinate: Some(0),
                    attack: attack(1e-3 * rs),
                    pendulum: PendulumParams::default(),
                    lti: LtiParams::scalar(2.0),
                    controller: ControllerConfig {
                        kind: ControllerKind::Lqr,
                        state_weights: vec![1000.0, 1.0],
                        input_weight: 1.0,
                        gain: None,
                    },
                    detector,
                    probe: ProbeConfig {
                        ies_pairs: 40,
                        ies_horizon: 1500,
                        iu_samples: 20,
                        iu_horizon: 1000,
                        iu_threshold: 2.0 * rs,
                        kappa_slack: 1.5,
                    },
                    sweep,
                }
            }
            ScenarioKind::ScalarLti | ScenarioKind::Lti => ScenarioConfig {
                scenario: kind,
                horizon: 100,
                pre_roll: 200,
                seed: 0,
                ensemble: 100,
                alpha: 10.0,
                safe_radius: 1.0,
                safety_coordinate: None,
                attack: attack(1e-3),
                pendulum: PendulumParams::default(),
                lti: LtiParams::scalar(2.0),
                controller: gain(1.5),
                detector,
                probe: lti_probe,
                sweep,
            },
            ScenarioKind::NullBench => ScenarioConfig {
                scenario: kind,
                horizon: 100,
                pre_roll: 200,
                seed: 0,
                ensemble: 100,
                alpha: 10.0,
                safe_radius: 1.0,
                safety_coordinate: None,
                attack: attack(1e-3),
                pendulum: PendulumParams::default(),
                lti: LtiParams::scalar(0.5),
                controller: gain(0.25),
                detector,
                probe: lti_probe,
                sweep,
            },
        }
    }

    /// Checks every invariant. A zero attack seed is accepted only when
    /// `allow_null_attack` is set.
    pub fn validate(&self, allow_null_attack: bool) -> Result<()> {
        let cfg = |m: &str| Err(Error::Config(m.into()));
        if self.horizon == 0 {
            return cfg("horizon must be at least 1");
        }
        if self.ensemble == 0 {
            return cfg("ensemble must be at least 1");
        }
        if !(self.safe_radius > 0.0) || !self.safe_radius.is_finite() {
            return cfg("safe_radius must be positive");
        }
        if !(self.alpha > self.safe_radius) || !self.alpha.is_finite() {
            return Err(Error::Config(alloc::format!(
                "alpha ({}) must exceed safe_radius ({}): the unsafe region lies strictly outside the safe region",
                self.alpha,
                self.safe_radius
            )));
        }
        let s0 = self.attack.s0_norm;
        if !(s0 >= 0.0) || !s0.is_finite() {
            return cfg("attack.s0_norm must be finite and nonnegative");
        }
        if s0 == 0.0 && !allow_null_attack {
            return cfg("attack.s0_norm must be nonzero (a zero seed is the null attack)");
        }
        if let Some(d) = &self.attack.direction {
            if d.iter().all(|v| *v == 0.0) || d.iter().any(|v| !v.is_finite()) {
                return cfg("attack.direction must be a finite nonzero vector");
            }
        }
        if self.detector.window == 0 {
            return cfg("detector.window must be at least 1");
        }
        if !(self.detector.false_alarm > 0.0 && self.detector.false_alarm <= 1.0) {
            return cfg("detector.false_alarm must lie in (0, 1]");
        }
        let needed = crate::detectors::min_calibration_traces(self.detector.false_alarm).max(crate::stealth::MIN_ENSEMBLE);
        if self.detector.traces < needed {
            return Err(Error::Config(alloc::format!(
                "detector.traces must be at least {needed} for a false-alarm rate of {}",
                self.detector.false_alarm
            )));
        }
        if !(self.probe.kappa_slack >= 1.0) {
            return cfg("probe.kappa_slack must be at least 1");
        }
        if !(self.probe.iu_threshold > 0.0) {
            return cfg("probe.iu_threshold must be positive");
        }
        if self.sweep.s0_norms.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return cfg("sweep.s0_norms must be positive");
        }
        if self.scenario == ScenarioKind::Pendulum {
            self.pendulum.validate()?;
        }
        if self.controller.kind == ControllerKind::Gain && self.controller.gain.is_none() {
            return cfg("controller.gain is required when controller.kind = \"gain\"");
        }
        if self.controller.kind == ControllerKind::Lqr
            && !(self.controller.state_weights.iter().all(|q| *q > 0.0 && q.is_finite()) && self.controller.input_weight > 0.0)
        {
            return cfg("controller LQR weights must be positive");
        }
        Ok(())
    }

    pub fn metric(&self) -> SafetyMetric {
        self.safety_coordinate.map_or(SafetyMetric::Euclidean, SafetyMetric::Coordinate)
    }

    pub fn campaign_settings(&self) -> CampaignSettings {
        CampaignSettings {
            horizon: self.horizon,
            pre_roll: self.pre_roll,
            alpha: self.alpha,
            metric: self.metric(),
            generator: self.attack.generator,
        }
    }

    pub fn ies_settings(&self) -> IesProbeSettings {
        IesProbeSettings {
            pairs: self.probe.ies_pairs,
            horizon: self.probe.ies_horizon,
            radius: self.safe_radius,
            seed: self.seed,
        }
    }

    pub fn iu_settings(&self) -> IuProbeSettings {
        let mut s = IuProbeSettings::new(self.safe_radius, self.probe.iu_threshold);
        s.samples = self.probe.iu_samples;
        s.horizon = self.probe.iu_horizon;
        s.seed = self.seed;
        s
    }
}

/// A built scenario: plant, controller and the configuration they came from.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub plant: PlantModel,
    pub controller: FeedbackController,
}

impl Scenario {
    /// `s_0` with norm `attack.s0_norm`, along the configured or default direction.
    pub fn attack_seed(&self) -> Result<Vector> {
        self.attack_seed_with_norm(self.config.attack.s0_norm)
    }

    pub fn attack_seed_with_norm(&self, norm: f64) -> Result<Vector> {
        let n = self.plant.state_dim();
        let dir = match &self.config.attack.direction {
            Some(d) => {
                if d.len() != n {
                    return Err(Error::dim("attack direction", n, d.len()));
                }
                let v = Vector::from_column_slice(d);
                let len = v.norm();
                v / len
            }
            None => canonical_sign(default_attack_seed(&self.plant, 1.0)?.normalize()),
        };
        Ok(dir * norm)
    }

    /// The plant's linear form, when it has one.
    pub fn linear(&self) -> Option<&LinearDynamics> {
        self.plant.dynamics().as_linear()
    }
}

fn feedback_gain(plant: &PlantModel, a: &Matrix, b: &Matrix, ctrl: &ControllerConfig) -> Result<Matrix> {
    match ctrl.kind {
        ControllerKind::Gain => {
            let rows = ctrl.gain.as_ref().ok_or_else(|| Error::Config("controller.gain missing".into()))?;
            let k = matrix_from_rows(rows)?;
            if k.shape() != (plant.input_dim(), plant.state_dim()) {
                return Err(Error::Config(alloc::format!(
                    "controller.gain must be {}x{}, got {}x{}",
                    plant.input_dim(),
                    plant.state_dim(),
                    k.nrows(),
                    k.ncols()
                )));
            }
            Ok(k)
        }
        ControllerKind::Lqr => {
            let n = a.nrows();
            let m = b.ncols();
            let q = if ctrl.state_weights.is_empty() {
                Matrix::identity(n, n)
            } else if ctrl.state_weights.len() == n {
                Matrix::from_diagonal(&Vector::from_column_slice(&ctrl.state_weights))
            } else {
                return Err(Error::Config(alloc::format!(
                    "controller.state_weights must have {n} entries, got {}",
                    ctrl.state_weights.len()
                )));
            };
            lqr_gain(a, b, &q, &(Matrix::identity(m, m) * ctrl.input_weight))
        }
    }
}

/// Plant and EKF-plus-LQR controller for the pendulum. The filter starts at
/// `x̂ = 0`, `P_0 = Σw`.
pub fn build_pendulum(params: &PendulumParams, ctrl: &ControllerConfig) -> Result<(PlantModel, FeedbackController)> {
    params.validate()?;
    let dynamics = PendulumDynamics { params: params.clone() };
    let a = dynamics.state_jacobian(&Vector::zeros(2), &Vector::zeros(1));
    let b = dynamics.input_matrix();
    let sw = Matrix::identity(2, 2) * params.process_var;
    let sv = Matrix::identity(2, 2) * params.measurement_var;
    let plant = PlantModel::new(Arc::new(dynamics), sw.clone(), sv, 1.0)?;
    let gain = feedback_gain(&plant, &a, &b, ctrl)?;
    let controller = FeedbackController::new(plant.clone(), gain, Vector::zeros(2), sw)?;
    Ok((plant, controller))
}

/// Linear plant with a steady-state Kalman filter and state feedback.
pub fn build_lti(params: &LtiParams, ctrl: &ControllerConfig) -> Result<(PlantModel, FeedbackController)> {
    let a = matrix_from_rows(&params.a)?;
    let b = matrix_from_rows(&params.b)?;
    let c = matrix_from_rows(&params.c)?;
    let sw = matrix_from_rows(&params.process_cov)?;
    let sv = matrix_from_rows(&params.measurement_cov)?;
    // h(x) = Cx is Lipschitz with constant σ_max(C).
    let l_h = c.clone().svd(false, false).singular_values.amax();
    let lin = LinearDynamics::new(a.clone(), b.clone(), c)?;
    let plant = PlantModel::new(Arc::new(lin), sw, sv, l_h)?;
    let gain = feedback_gain(&plant, &a, &b, ctrl)?;
    let controller = FeedbackController::steady_state(plant.clone(), gain)?;
    Ok((plant, controller))
}

pub fn build_scenario(config: &ScenarioConfig) -> Result<Scenario> {
    let (plant, controller) = match config.scenario {
        ScenarioKind::Pendulum => build_pendulum(&config.pendulum, &config.controller)?,
        _ => build_lti(&config.lti, &config.controller)?,
    };
    config.metric().validate(plant.state_dim())?;
    Ok(Scenario {
        config: config.clone(),
        plant,
        controller,
    })
}

/// `A = 2, B = C = 1`, `Σw = Σv = 0.01`, observer-based feedback `u = −1.5 x̂`.
pub fn build_scalar_lti_bench() -> ScenarioConfig {
    ScenarioConfig::defaults(ScenarioKind::ScalarLti)
}

/// `A = 0.5`, `u = −0.25 x̂`: open-loop stable, so the attack has bounded impact.
pub fn build_null_bench() -> ScenarioConfig {
    ScenarioConfig::defaults(ScenarioKind::NullBench)
}

/// Human-readable modelling choices, for reports.
pub fn modelling_notes(config: &ScenarioConfig) -> Vec<String> {
    let mut notes = Vec::new();
    if config.scenario == ScenarioKind::Pendulum {
        notes.push("forward-Euler discretization of the pendulum at the configured sample period".into());
        notes.push("safety measured on the angle coordinate; angular velocity unconstrained".into());
        notes.push("no torque saturation".into());
    }
    notes.push("attack starts at t = 0 after an attack-free pre-roll from the origin".into());
    notes
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{eigenvalues, spectral_radius};
    use approx::assert_relative_eq;

    fn pendulum() -> PendulumDynamics {
        PendulumDynamics {
            params: PendulumParams::default(),
        }
    }

    #[test]
    fn pendulum_equilibrium_and_euler_step() {
        let p = pendulum();
        assert_eq!(p.transition(&Vector::zeros(2), &Vector::zeros(1)), Vector::zeros(2));
        let x = p.transition(&Vector::from_vec(vec![0.1, 0.0]), &Vector::zeros(1));
        assert_relative_eq!(x[0], 0.1);
        assert_relative_eq!(x[1], 0.01 * (9.8 / 0.3) * libm::sin(0.1), epsilon = 1e-15);
        assert_relative_eq!(x[1], 0.0326113, epsilon = 2e-6);
        let x = p.transition(&Vector::from_vec(vec![PI / 6.0, 0.0]), &Vector::zeros(1));
        assert_relative_eq!(x[1], 0.163333, epsilon = 1e-6);
    }

    #[test]
    fn pendulum_jacobian_matches_finite_differences() {
        let p = pendulum();
        let x = Vector::from_vec(vec![0.4, -0.7]);
        let u = Vector::from_vec(vec![0.2]);
        let analytic = p.state_jacobian(&x, &u);
        let h = 1e-6;
        for j in 0..2 {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[j] += h;
            xm[j] -= h;
            let col = (p.transition(&xp, &u) - p.transition(&xm, &u)) / (2.0 * h);
            for i in 0..2 {
                assert_relative_eq!(analytic[(i, j)], col[i], epsilon = 1e-8);
            }
        }
    }

    #[test]
    fn pendulum_upright_is_unstable() {
        let a = pendulum().state_jacobian(&Vector::zeros(2), &Vector::zeros(1));
        let rho = spectral_radius(&a).unwrap();
        // Characteristic polynomial of [[1, Ts], [Ts·g/r, 1 − Ts·b/(mr²)]].
        let (tr, det) = (a[(0, 0)] + a[(1, 1)], a[(0, 0)] * a[(1, 1)] - a[(0, 1)] * a[(1, 0)]);
        let root = (tr + libm::sqrt(tr * tr - 4.0 * det)) / 2.0;
        assert_relative_eq!(rho, root, epsilon = 1e-12);
        assert!(rho > 1.03 && rho < 1.04);
    }

    #[test]
    fn pendulum_lqr_stabilizes_linearization() {
        let cfg = ScenarioConfig::defaults(ScenarioKind::Pendulum);
        let (plant, ctrl) = build_pendulum(&cfg.pendulum, &cfg.controller).unwrap();
        let a = plant.dynamics().state_jacobian(&Vector::zeros(2), &Vector::zeros(1));
        let b = pendulum().input_matrix();
        let cl = a - b * ctrl.gain();
        assert!(eigenvalues(&cl).unwrap().iter().all(|z| z.norm() < 1.0));
    }

    #[test]
    fn scalar_bench_matrices() {
        let sc = build_scenario(&build_scalar_lti_bench()).unwrap();
        let lti = sc.controller.as_lti().unwrap();
        let cl = crate::controllers::closed_loop_matrix(sc.linear().unwrap(), &lti).unwrap();
        let rho = spectral_radius(&cl).unwrap();
        assert!(rho <= 0.7);
        assert_relative_eq!(rho, 0.5, epsilon = 1e-9);
        assert_eq!(sc.plant.output_lipschitz(), 1.0);
        assert_relative_eq!(sc.attack_seed().unwrap()[0], 1e-3);
    }

    #[test]
    fn validation_rules() {
        let mut cfg = build_scalar_lti_bench();
        assert!(cfg.validate(false).is_ok());
        cfg.alpha = 0.5;
        assert!(cfg.validate(false).is_err());
        let mut cfg = build_scalar_lti_bench();
        cfg.attack.s0_norm = 0.0;
        assert!(cfg.validate(false).is_err());
        assert!(cfg.validate(true).is_ok());
        let mut cfg = ScenarioConfig::defaults(ScenarioKind::Pendulum);
        cfg.pendulum.ts = 0.0;
        assert!(cfg.validate(false).is_err());
    }
}
