//! Stealthy sensor attack generator and attack campaigns.
//!
//! The attacker runs the internal dynamics
//!
//! ```text
//! s_{t+1} = f(x^a_t, u^a_t) − f(x^a_t − s_t, u^a_t)
//! a_t     = h(x^a_t − s_t) − h(x^a_t)
//! ```
//!
//! so the controller receives `h(e_t) + v_t` with `e_t = x^a_t − s_t`, which
//! evolves exactly like an attack-free plant started at `x_0 − s_0`. For an LTI
//! plant this reduces to `s_{t+1} = A s_t`, `a_t = −C s_t`.

use alloc::vec::Vec;

use crate::dynamics::{simulate_closed_loop, Controller, Injection, NoiseStream, PlantModel, SimulationOptions, Trajectory};
use crate::linalg::{canonical_sign, dominant_direction, ensure_len, ensure_shape, Matrix, Vector};
use crate::{Error, Result};

/// Attacked runs stop once the state magnitude exceeds this multiple of `α`;
/// beyond it the injected signal loses absolute precision.
pub const ESCAPE_FACTOR: f64 = 100.0;

/// Default `‖s_0‖` as a fraction of the safe radius.
pub const DEFAULT_SEED_FRACTION: f64 = 1e-3;

/// Relative tolerance of the per-step check `e_{t+1} = f(e_t, u^a_t) + w_t`.
pub const CONSISTENCY_TOL: f64 = 1e-6;

/// One step of the full-knowledge generator: returns `(a_t, s_{t+1})`.
pub fn attack_step(plant: &PlantModel, s: &Vector, x_a: &Vector, u_a: &Vector) -> Result<(Vector, Vector)> {
    let n = plant.state_dim();
    ensure_len(s, n, "attack state")?;
    ensure_len(x_a, n, "attacked plant state")?;
    ensure_len(u_a, plant.input_dim(), "attacked input")?;
    let dynamics = plant.dynamics();
    let e = x_a - s;
    let a = dynamics.output(&e) - dynamics.output(x_a);
    let s_next = dynamics.transition(x_a, u_a) - dynamics.transition(&e, u_a);
    Ok((a, s_next))
}

/// LTI reduction: `(a, s') = (−C s, A s)`; needs no plant-state access.
pub fn lti_attack_step(a: &Matrix, c: &Matrix, s: &Vector) -> Result<(Vector, Vector)> {
    let n = a.nrows();
    ensure_shape(a, n, n, "attack A")?;
    ensure_shape(c, c.nrows(), n, "attack C")?;
    ensure_len(s, n, "attack state")?;
    Ok((-(c * s), a * s))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(rename_all = "kebab-case"))]
pub enum GeneratorKind {
    /// Uses `x^a_t` and `u^a_t` (general plants).
    FullKnowledge,
    /// Uses only `A` and `C` (linear plants).
    LinearReduction,
}

/// Attack generator as a measurement-channel injection.
pub struct AttackGenerator<'a> {
    plant: &'a PlantModel,
    kind: GeneratorKind,
    s: Vector,
    history: Vec<Vector>,
}

impl<'a> AttackGenerator<'a> {
    pub fn new(plant: &'a PlantModel, s0: Vector, kind: GeneratorKind) -> Result<Self> {
        ensure_len(&s0, plant.state_dim(), "initial attack state")?;
        if kind == GeneratorKind::LinearReduction && plant.dynamics().as_linear().is_none() {
            return Err(Error::Unsupported("linear attack reduction requires a linear plant"));
        }
        Ok(AttackGenerator {
            plant,
            kind,
            history: alloc::vec![s0.clone()],
            s: s0,
        })
    }

    /// `s_0, s_1, …` generated so far.
    pub fn history(&self) -> &[Vector] {
        &self.history
    }

    pub fn into_history(self) -> Vec<Vector> {
        self.history
    }
}

impl Injection for AttackGenerator<'_> {
    fn signal(&mut self, _t: usize, x: &Vector, _y: &Vector) -> Result<Vector> {
        match self.kind {
            GeneratorKind::FullKnowledge => {
                let d = self.plant.dynamics();
                Ok(d.output(&(x - &self.s)) - d.output(x))
            }
            GeneratorKind::LinearReduction => {
                let lin = self.plant.dynamics().as_linear().ok_or(Error::Unsupported("linear attack reduction"))?;
                Ok(-(&lin.c * &self.s))
            }
        }
    }

    fn observe(&mut self, _t: usize, x: &Vector, u: &Vector) -> Result<()> {
        let next = match self.kind {
            GeneratorKind::FullKnowledge => attack_step(self.plant, &self.s, x, u)?.1,
            GeneratorKind::LinearReduction => {
                let lin = self.plant.dynamics().as_linear().ok_or(Error::Unsupported("linear attack reduction"))?;
                &lin.a * &self.s
            }
        };
        self.history.push(next.clone());
        self.s = next;
        Ok(())
    }
}

/// How "distance from the operating point" is measured for safety.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(rename_all = "kebab-case"))]
pub enum SafetyMetric {
    Euclidean,
    /// Absolute value of one state coordinate (e.g. the pendulum angle).
    Coordinate(usize),
}

impl SafetyMetric {
    pub fn eval(&self, x: &Vector) -> f64 {
        match *self {
            SafetyMetric::Euclidean => x.norm(),
            SafetyMetric::Coordinate(i) => x.get(i).map_or(f64::NAN, |v| v.abs()),
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        match *self {
            SafetyMetric::Coordinate(i) if i >= n => Err(Error::Config(alloc::format!(
                "safety coordinate {i} out of range for a {n}-dimensional state"
            ))),
            _ => Ok(()),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CampaignSettings {
    pub horizon: usize,
    pub pre_roll: usize,
    pub alpha: f64,
    pub metric: SafetyMetric,
    pub generator: GeneratorKind,
}

impl CampaignSettings {
    pub fn new(horizon: usize, alpha: f64) -> Self {
        CampaignSettings {
            horizon,
            pre_roll: 200,
            alpha,
            metric: SafetyMetric::Euclidean,
            generator: GeneratorKind::FullKnowledge,
        }
    }
}

/// Attacked, counterfactual and virtual evolutions on one noise stream.
#[derive(Clone, Debug, PartialEq)]
pub struct CampaignResult {
    pub attacked: Trajectory,
    pub counterfactual: Trajectory,
    /// `s_0 … s_k` over the attacked run.
    pub attack_states: Vec<Vector>,
    /// `e_t = x^a_t − s_t`.
    pub virtual_states: Vec<Vector>,
    pub s0: Vector,
    pub alpha: f64,
    pub metric: SafetyMetric,
    /// First `t` with `metric(x^a_t) ≥ α`.
    pub first_crossing: Option<usize>,
    /// Step at which the attacked run was stopped by the escape cap.
    pub escaped_at: Option<usize>,
    pub counterfactual_diverged: bool,
    /// `‖x_t − e_t‖`.
    pub state_gap: Vec<f64>,
    /// `‖X_t − X^e_t‖` on the closed-loop state.
    pub closed_loop_gap: Vec<f64>,
    /// Largest relative deviation of `e` from its own recursion.
    pub consistency: f64,
}

impl CampaignResult {
    pub fn max_magnitude(&self) -> f64 {
        self.attacked.states.iter().map(|x| self.metric.eval(x)).fold(0.0, f64::max)
    }

    pub fn counterfactual_max_magnitude(&self) -> f64 {
        self.counterfactual.states.iter().map(|x| self.metric.eval(x)).fold(0.0, f64::max)
    }

    /// `X^e_t = (e_t, 𝒳^a_{t-1})`.
    pub fn virtual_closed_loop_state(&self, t: usize) -> Vector {
        let e = &self.virtual_states[t];
        let c = &self.attacked.controller_states[t];
        let mut out = Vector::zeros(e.len() + c.len());
        out.rows_mut(0, e.len()).copy_from(e);
        out.rows_mut(e.len(), c.len()).copy_from(c);
        out
    }
}

/// `‖s_0‖ = DEFAULT_SEED_FRACTION · R_S` along the eigenvector of the
/// largest-modulus eigenvalue of `∂f/∂x` at the origin.
pub fn default_attack_seed(plant: &PlantModel, safe_radius: f64) -> Result<Vector> {
    let n = plant.state_dim();
    let jac = plant.dynamics().state_jacobian(&Vector::zeros(n), &Vector::zeros(plant.input_dim()));
    let dir = canonical_sign(dominant_direction(&jac)?);
    Ok(dir * (DEFAULT_SEED_FRACTION * safe_radius))
}

/// Run the attack from `t = 0` after `pre_roll` attack-free steps from the
/// origin, together with the attack-free counterfactual on the same noise.
pub fn run_attack_campaign<C: Controller>(
    plant: &PlantModel,
    ctrl: &C,
    s0: &Vector,
    noise: &NoiseStream,
    settings: &CampaignSettings,
) -> Result<CampaignResult> {
    let n = plant.state_dim();
    ensure_len(s0, n, "initial attack state")?;
    settings.metric.validate(n)?;
    if !(settings.alpha > 0.0 && settings.alpha.is_finite()) {
        return Err(Error::Config("alpha must be positive and finite".into()));
    }
    let (x0, c0) = if settings.pre_roll > 0 {
        let opts = SimulationOptions::new(settings.pre_roll).starting_at(-(settings.pre_roll as i64));
        let (pre, c) = simulate_closed_loop(plant, ctrl, &Vector::zeros(n), &ctrl.initial_state(), noise, &opts, None)?;
        if pre.is_diverged() {
            return Err(Error::Numerical("attack-free pre-roll diverged"));
        }
        (pre.states.last().cloned().unwrap_or_else(|| Vector::zeros(n)), c)
    } else {
        (Vector::zeros(n), ctrl.initial_state())
    };

    let cap = (ESCAPE_FACTOR * settings.alpha).min(crate::dynamics::DIVERGENCE_GUARD);
    let mut generator = AttackGenerator::new(plant, s0.clone(), settings.generator)?;
    let attacked_opts = SimulationOptions::new(settings.horizon).with_guard(cap);
    let (attacked, _) = simulate_closed_loop(plant, ctrl, &x0, &c0, noise, &attacked_opts, Some(&mut generator))?;
    let (counterfactual, _) = simulate_closed_loop(plant, ctrl, &x0, &c0, noise, &SimulationOptions::new(settings.horizon), None)?;

    let mut attack_states = generator.into_history();
    attack_states.truncate(attacked.states.len());
    let virtual_states: Vec<Vector> = attacked.states.iter().zip(&attack_states).map(|(x, s)| x - s).collect();

    let dynamics = plant.dynamics();
    let mut consistency: f64 = 0.0;
    for t in 0..attacked.steps() {
        let stepped = dynamics.transition(&virtual_states[t], &attacked.inputs[t]) + &attacked.process_noise[t];
        let scale = attacked.states[t + 1].norm().max(1.0);
        let dev = (&stepped - &virtual_states[t + 1]).norm() / scale;
        consistency = consistency.max(dev);
        if !(dev <= CONSISTENCY_TOL) {
            return Err(Error::Consistency { step: t, discrepancy: dev });
        }
    }

    let first_crossing = attacked.states.iter().position(|x| settings.metric.eval(x) >= settings.alpha);
    let len = attacked.states.len().min(counterfactual.states.len());
    let state_gap = (0..len).map(|t| (&counterfactual.states[t] - &virtual_states[t]).norm()).collect();
    let mut result = CampaignResult {
        escaped_at: attacked.diverged_at,
        counterfactual_diverged: counterfactual.is_diverged(),
        attacked,
        counterfactual,
        attack_states,
        virtual_states,
        s0: s0.clone(),
        alpha: settings.alpha,
        metric: settings.metric,
        first_crossing,
        state_gap,
        closed_loop_gap: Vec::new(),
        consistency,
    };
    result.closed_loop_gap = (0..len)
        .map(|t| (result.counterfactual.closed_loop_state(t) - result.virtual_closed_loop_state(t)).norm())
        .collect();
    Ok(result)
}

/// `max_t ‖y^{c,a}_t − (h(e_t) + v_t)‖` over the attacked run.
pub fn verify_spoof_identity(result: &CampaignResult, plant: &PlantModel) -> f64 {
    let d = plant.dynamics();
    let tr = &result.attacked;
    (0..tr.steps())
        .map(|t| (&tr.received[t] - (d.output(&result.virtual_states[t]) + &tr.measurement_noise[t])).norm())
        .fold(0.0, f64::max)
}
