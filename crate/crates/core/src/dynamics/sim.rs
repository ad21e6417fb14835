use alloc::vec::Vec;

use super::controller::{step_controller, Controller, Innovation};
use super::noise::NoiseStream;
use super::plant::PlantModel;
use crate::linalg::{ensure_len, Vector};
use crate::{Error, Result};

/// Any state component above this magnitude truncates a rollout.
pub const DIVERGENCE_GUARD: f64 = 1e12;

fn out_of_bounds(v: &Vector, guard: f64) -> bool {
    v.iter().any(|x| !x.is_finite() || x.abs() > guard)
}

fn concat(a: &Vector, b: &Vector) -> Vector {
    let mut out = Vector::zeros(a.len() + b.len());
    out.rows_mut(0, a.len()).copy_from(a);
    out.rows_mut(a.len(), b.len()).copy_from(b);
    out
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SimulationOptions {
    pub horizon: usize,
    /// Noise-stream index of the first step.
    pub start: i64,
    pub guard: f64,
}

impl SimulationOptions {
    pub fn new(horizon: usize) -> Self {
        SimulationOptions {
            horizon,
            start: 0,
            guard: DIVERGENCE_GUARD,
        }
    }

    pub fn starting_at(mut self, start: i64) -> Self {
        self.start = start;
        self
    }

    pub fn with_guard(mut self, guard: f64) -> Self {
        self.guard = guard;
        self
    }
}

/// Additive signal on the measurement channel between plant and controller.
pub trait Injection {
    /// Signal added to `y_t`; `x` is the true plant state at step `t`.
    fn signal(&mut self, t: usize, x: &Vector, y: &Vector) -> Result<Vector>;

    /// Sees the control input computed at step `t`.
    fn observe(&mut self, _t: usize, _x: &Vector, _u: &Vector) -> Result<()> {
        Ok(())
    }
}

/// A precomputed injection sequence.
pub struct SignalInjection<'a>(pub &'a [Vector]);

impl Injection for SignalInjection<'_> {
    fn signal(&mut self, t: usize, _x: &Vector, y: &Vector) -> Result<Vector> {
        let a = self
            .0
            .get(t)
            .ok_or_else(|| Error::Config(alloc::format!("injection sequence shorter than horizon (step {t})")))?;
        ensure_len(a, y.len(), "injection signal")?;
        Ok(a.clone())
    }
}

/// A closed-loop rollout.
///
/// `states` holds `x_0..x_k` and `controller_states` the matching controller
/// memories `𝒳_{-1}..𝒳_{k-1}` (as [`Controller::state_vector`]), so index `t`
/// of both forms the closed-loop state at step `t`. Per-step sequences
/// (inputs, outputs, noise, …) have length `k`. `k` equals the horizon unless
/// the rollout was truncated by the divergence guard.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub horizon: usize,
    pub start: i64,
    pub seed: Option<u64>,
    pub states: Vec<Vector>,
    pub controller_states: Vec<Vector>,
    pub inputs: Vec<Vector>,
    /// True outputs `y_t = h(x_t) + v_t`.
    pub measurements: Vec<Vector>,
    /// Outputs as delivered to the controller, `y_t + a_t`.
    pub received: Vec<Vector>,
    /// Injected signals; empty when no injection was applied.
    pub injections: Vec<Vector>,
    pub process_noise: Vec<Vector>,
    pub measurement_noise: Vec<Vector>,
    /// Estimator innovations; empty when the controller has no estimator.
    pub innovations: Vec<Innovation>,
    /// Last finite step index when the rollout was truncated.
    pub diverged_at: Option<usize>,
}

impl Trajectory {
    fn empty(horizon: usize, start: i64, seed: Option<u64>, x0: Vector, c0: Vector) -> Self {
        Trajectory {
            horizon,
            start,
            seed,
            states: alloc::vec![x0],
            controller_states: alloc::vec![c0],
            inputs: Vec::with_capacity(horizon),
            measurements: Vec::with_capacity(horizon),
            received: Vec::with_capacity(horizon),
            injections: Vec::new(),
            process_noise: Vec::with_capacity(horizon),
            measurement_noise: Vec::with_capacity(horizon),
            innovations: Vec::new(),
            diverged_at: None,
        }
    }

    /// Number of simulated steps.
    pub fn steps(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_diverged(&self) -> bool {
        self.diverged_at.is_some()
    }

    /// `[x_t; 𝒳_{t-1}]`.
    pub fn closed_loop_state(&self, t: usize) -> Vector {
        concat(&self.states[t], &self.controller_states[t])
    }
}

struct StepOutcome<S> {
    next_state: Vector,
    controller: S,
    input: Vector,
    measurement: Vector,
    received: Vector,
    injection: Option<Vector>,
    process_noise: Vector,
    measurement_noise: Vector,
    innovation: Option<Innovation>,
}

fn closed_loop_step<C: Controller>(
    plant: &PlantModel,
    ctrl: &C,
    x: &Vector,
    c: &C::State,
    noise: &NoiseStream,
    t: usize,
    index: i64,
    injection: Option<&mut (dyn Injection + '_)>,
) -> Result<StepOutcome<C::State>> {
    let draw = plant.noise(noise, index);
    let y = plant.measure(x, &draw.measurement)?;
    let (received, injected, injection) = match injection {
        Some(inj) => {
            let a = inj.signal(t, x, &y)?;
            ensure_len(&a, y.len(), "injection signal")?;
            (&y + &a, Some(a), Some(inj))
        }
        None => (y.clone(), None, None),
    };
    let (controller, u) = step_controller(ctrl, c, &received)?;
    if let Some(inj) = injection {
        inj.observe(t, x, &u)?;
    }
    let next_state = plant.step(x, &u, &draw.process)?;
    let innovation = ctrl.innovation(&controller);
    Ok(StepOutcome {
        next_state,
        controller,
        input: u,
        measurement: y,
        received,
        injection: injected,
        process_noise: draw.process,
        measurement_noise: draw.measurement,
        innovation,
    })
}

/// Roll the closed loop forward `opts.horizon` steps from `(x0, c0)`.
///
/// With an injection, the controller receives `y_t + a_t` while the logged
/// true output stays `y_t`. The result is a deterministic function of the
/// inputs and the noise seed. Returns the trajectory and the final controller
/// memory.
pub fn simulate_closed_loop<C: Controller>(
    plant: &PlantModel,
    ctrl: &C,
    x0: &Vector,
    c0: &C::State,
    noise: &NoiseStream,
    opts: &SimulationOptions,
    mut injection: Option<&mut (dyn Injection + '_)>,
) -> Result<(Trajectory, C::State)> {
    ensure_len(x0, plant.state_dim(), "initial state")?;
    if opts.horizon == 0 {
        return Err(Error::Config("horizon must be at least one step".into()));
    }
    let seed = (!noise.is_silent()).then(|| noise.seed());
    let mut traj = Trajectory::empty(opts.horizon, opts.start, seed, x0.clone(), ctrl.state_vector(c0));
    let mut x = x0.clone();
    let mut c = c0.clone();
    for t in 0..opts.horizon {
        let step = closed_loop_step(plant, ctrl, &x, &c, noise, t, opts.start + t as i64, injection.as_deref_mut())?;
        let cvec = ctrl.state_vector(&step.controller);
        if out_of_bounds(&step.next_state, opts.guard) || out_of_bounds(&cvec, opts.guard) {
            traj.diverged_at = Some(t);
            break;
        }
        traj.inputs.push(step.input);
        traj.measurements.push(step.measurement);
        traj.received.push(step.received);
        if let Some(a) = step.injection {
            traj.injections.push(a);
        }
        traj.process_noise.push(step.process_noise);
        traj.measurement_noise.push(step.measurement_noise);
        if let Some(inn) = step.innovation {
            traj.innovations.push(inn);
        }
        traj.states.push(step.next_state.clone());
        traj.controller_states.push(cvec);
        x = step.next_state;
        c = step.controller;
    }
    Ok((traj, c))
}

/// A system `ξ_{t+1} = F(ξ_t, d_t)` whose exogenous input at step `t` is fixed
/// by a noise stream, so that two copies can be driven by the same input.
pub trait IncrementalSystem {
    type State: Clone;

    fn dim(&self) -> usize;
    fn from_vector(&self, v: &Vector) -> Self::State;
    fn to_vector(&self, state: &Self::State) -> Vector;
    fn advance(&self, state: &Self::State, t: usize, noise: &NoiseStream) -> Result<Self::State>;
}

/// The closed loop `X_{t+1} = F(X_t, W_t)` with `X_t = (x_t, 𝒳_{t-1})`.
pub struct ClosedLoop<'a, C> {
    pub plant: &'a PlantModel,
    pub controller: &'a C,
    pub start: i64,
}

impl<'a, C: Controller> ClosedLoop<'a, C> {
    pub fn new(plant: &'a PlantModel, controller: &'a C) -> Self {
        ClosedLoop {
            plant,
            controller,
            start: 0,
        }
    }
}

impl<C: Controller> IncrementalSystem for ClosedLoop<'_, C> {
    type State = (Vector, C::State);

    fn dim(&self) -> usize {
        self.plant.state_dim() + self.controller.internal_dim()
    }

    fn from_vector(&self, v: &Vector) -> Self::State {
        let n = self.plant.state_dim();
        let x = v.rows(0, n).into_owned();
        let c = v.rows(n, v.len() - n).into_owned();
        (x, self.controller.state_from_vector(&c))
    }

    fn to_vector(&self, state: &Self::State) -> Vector {
        concat(&state.0, &self.controller.state_vector(&state.1))
    }

    fn advance(&self, state: &Self::State, t: usize, noise: &NoiseStream) -> Result<Self::State> {
        let step = closed_loop_step(self.plant, self.controller, &state.0, &state.1, noise, t, self.start + t as i64, None)?;
        Ok((step.next_state, step.controller))
    }
}

/// The open-loop plant in stacked form `x_{t+1} = f_u(x_t, U_t)`, with the
/// control part of `U_t` replayed from a recorded sequence and the noise part
/// drawn from the stream.
pub struct StackedOpenLoop<'a> {
    pub plant: &'a PlantModel,
    pub inputs: Vec<Vector>,
    pub start: i64,
}

impl IncrementalSystem for StackedOpenLoop<'_> {
    type State = Vector;

    fn dim(&self) -> usize {
        self.plant.state_dim()
    }
    fn from_vector(&self, v: &Vector) -> Vector {
        v.clone()
    }
    fn to_vector(&self, state: &Vector) -> Vector {
        state.clone()
    }
    fn advance(&self, state: &Vector, t: usize, noise: &NoiseStream) -> Result<Vector> {
        let u = self
            .inputs
            .get(t)
            .ok_or_else(|| Error::Config(alloc::format!("recorded input sequence exhausted at step {t}")))?;
        let w = self.plant.noise(noise, self.start + t as i64).process;
        self.plant.step(state, u, &w)
    }
}

/// A vector system given by a closure `(ξ, t, noise) ↦ ξ'`.
pub struct FnSystem<F> {
    dim: usize,
    step: F,
}

impl<F> FnSystem<F>
where
    F: Fn(&Vector, usize, &NoiseStream) -> Vector,
{
    pub fn new(dim: usize, step: F) -> Self {
        FnSystem { dim, step }
    }
}

impl<F> IncrementalSystem for FnSystem<F>
where
    F: Fn(&Vector, usize, &NoiseStream) -> Vector,
{
    type State = Vector;

    fn dim(&self) -> usize {
        self.dim
    }
    fn from_vector(&self, v: &Vector) -> Vector {
        v.clone()
    }
    fn to_vector(&self, state: &Vector) -> Vector {
        state.clone()
    }
    fn advance(&self, state: &Vector, t: usize, noise: &NoiseStream) -> Result<Vector> {
        Ok((self.step)(state, t, noise))
    }
}

/// Two rollouts of the same system from different initial conditions under
/// one input realization.
#[derive(Clone, Debug, PartialEq)]
pub struct PairedRollout {
    pub first: Vec<Vector>,
    pub second: Vec<Vector>,
    pub diverged_at: Option<usize>,
}

impl PairedRollout {
    pub fn differences(&self) -> Vec<Vector> {
        self.first.iter().zip(&self.second).map(|(a, b)| a - b).collect()
    }

    pub fn difference_norms(&self) -> Vec<f64> {
        self.first.iter().zip(&self.second).map(|(a, b)| (a - b).norm()).collect()
    }
}

pub fn paired_rollout<S: IncrementalSystem>(
    system: &S,
    noise: &NoiseStream,
    xi1: &Vector,
    xi2: &Vector,
    horizon: usize,
) -> Result<PairedRollout> {
    ensure_len(xi1, system.dim(), "first initial condition")?;
    ensure_len(xi2, system.dim(), "second initial condition")?;
    let mut s1 = system.from_vector(xi1);
    let mut s2 = system.from_vector(xi2);
    let mut out = PairedRollout {
        first: alloc::vec![system.to_vector(&s1)],
        second: alloc::vec![system.to_vector(&s2)],
        diverged_at: None,
    };
    for t in 0..horizon {
        let n1 = system.advance(&s1, t, noise)?;
        let n2 = system.advance(&s2, t, noise)?;
        let (v1, v2) = (system.to_vector(&n1), system.to_vector(&n2));
        if out_of_bounds(&v1, DIVERGENCE_GUARD) || out_of_bounds(&v2, DIVERGENCE_GUARD) {
            out.diverged_at = Some(t);
            break;
        }
        out.first.push(v1);
        out.second.push(v2);
        s1 = n1;
        s2 = n2;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{FnController, FnDynamics, LinearDynamics};
    use crate::linalg::Matrix;
    use alloc::sync::Arc;
    use alloc::vec;
    use approx::assert_relative_eq;

    fn scalar_lti_plant(a: f64) -> PlantModel {
        PlantModel::new(
            Arc::new(LinearDynamics::scalar(a, 1.0, 1.0)),
            Matrix::from_element(1, 1, 0.01),
            Matrix::from_element(1, 1, 0.01),
            1.0,
        )
        .unwrap()
    }

    fn static_feedback(k: f64) -> impl Controller<State = Vector> {
        FnController::new(1, 1, 1, |_x: &Vector, y: &Vector| y.clone(), move |x: &Vector, _y: &Vector| x * -k)
    }

    #[test]
    fn zero_noise_equilibrium_is_invariant() {
        let plant = scalar_lti_plant(2.0);
        let ctrl = static_feedback(1.5);
        let (traj, _) = simulate_closed_loop(
            &plant,
            &ctrl,
            &Vector::zeros(1),
            &Vector::zeros(1),
            &NoiseStream::silent(),
            &SimulationOptions::new(50),
            None,
        )
        .unwrap();
        assert!(traj.states.iter().all(|x| x[0] == 0.0));
        assert_eq!(traj.states.len(), 51);
        assert_eq!(traj.inputs.len(), 50);
    }

    #[test]
    fn same_seed_reproduces_trajectory() {
        let plant = scalar_lti_plant(2.0);
        let ctrl = static_feedback(1.5);
        let run = |seed| {
            simulate_closed_loop(&plant, &ctrl, &Vector::zeros(1), &Vector::zeros(1), &NoiseStream::new(seed), &SimulationOptions::new(100), None)
                .unwrap()
                .0
        };
        assert_eq!(run(9), run(9));
        assert_ne!(run(9), run(10));
    }

    #[test]
    fn geometric_decay_under_feedback() {
        // x' = 2x − 1.5x = 0.5x with noiseless output feedback.
        let plant = scalar_lti_plant(2.0);
        let ctrl = static_feedback(1.5);
        let (traj, _) = simulate_closed_loop(
            &plant,
            &ctrl,
            &Vector::from_vec(vec![1.0]),
            &Vector::zeros(1),
            &NoiseStream::silent(),
            &SimulationOptions::new(40),
            None,
        )
        .unwrap();
        for (t, x) in traj.states.iter().enumerate() {
            assert_relative_eq!(x[0], libm::pow(0.5, t as f64), max_relative = 1e-12);
        }
    }

    #[test]
    fn noisy_scalar_matches_recursion() {
        let plant = scalar_lti_plant(0.9);
        let ctrl = static_feedback(0.3);
        let noise = NoiseStream::new(5);
        let (traj, _) =
            simulate_closed_loop(&plant, &ctrl, &Vector::from_vec(vec![0.4]), &Vector::zeros(1), &noise, &SimulationOptions::new(200), None)
                .unwrap();
        let mut x = 0.4;
        for t in 0..200 {
            let d = plant.noise(&noise, t as i64);
            let y = x + d.measurement[0];
            x = 0.9 * x - 0.3 * y + d.process[0];
            assert_relative_eq!(traj.states[t + 1][0], x, max_relative = 1e-12);
        }
    }

    #[test]
    fn injection_reaches_controller_but_not_log() {
        let plant = scalar_lti_plant(0.5);
        let ctrl = static_feedback(1.0);
        let signal = vec![Vector::from_vec(vec![1.0]); 3];
        let mut inj = SignalInjection(&signal);
        let (traj, _) = simulate_closed_loop(
            &plant,
            &ctrl,
            &Vector::zeros(1),
            &Vector::zeros(1),
            &NoiseStream::silent(),
            &SimulationOptions::new(3),
            Some(&mut inj),
        )
        .unwrap();
        assert_eq!(traj.measurements[0][0], 0.0);
        assert_eq!(traj.received[0][0], 1.0);
        assert_eq!(traj.inputs[0][0], -1.0);
        assert_eq!(traj.injections.len(), 3);
    }

    #[test]
    fn divergence_truncates_consistently() {
        let plant = scalar_lti_plant(10.0);
        let ctrl = static_feedback(0.0);
        let (traj, _) = simulate_closed_loop(
            &plant,
            &ctrl,
            &Vector::from_vec(vec![1.0]),
            &Vector::zeros(1),
            &NoiseStream::silent(),
            &SimulationOptions::new(100),
            None,
        )
        .unwrap();
        assert_eq!(traj.diverged_at, Some(12));
        assert_eq!(traj.states.len(), 13);
        assert_eq!(traj.controller_states.len(), 13);
        assert_eq!(traj.inputs.len(), 12);
    }

    #[test]
    fn zero_horizon_rejected() {
        let plant = scalar_lti_plant(0.5);
        let ctrl = static_feedback(1.0);
        let r = simulate_closed_loop(&plant, &ctrl, &Vector::zeros(1), &Vector::zeros(1), &NoiseStream::silent(), &SimulationOptions::new(0), None);
        assert!(matches!(r, Err(Error::Config(_))));
    }

    fn scalar_system(a: f64) -> FnSystem<impl Fn(&Vector, usize, &NoiseStream) -> Vector> {
        FnSystem::new(1, move |x: &Vector, t, noise: &NoiseStream| {
            let d = noise.standard_normals(t as i64, 1, 0).process;
            x * a + d
        })
    }

    #[test]
    fn paired_rollout_difference_contracts() {
        let sys = scalar_system(0.5);
        let pr = paired_rollout(&sys, &NoiseStream::new(3), &Vector::from_vec(vec![1.0]), &Vector::zeros(1), 40).unwrap();
        for (t, d) in pr.difference_norms().iter().enumerate() {
            assert_relative_eq!(*d, libm::pow(0.5, t as f64), max_relative = 1e-9, epsilon = 1e-15);
        }
    }

    #[test]
    fn paired_rollout_difference_expands() {
        let sys = scalar_system(2.0);
        let pr = paired_rollout(&sys, &NoiseStream::new(3), &Vector::from_vec(vec![1.0]), &Vector::zeros(1), 30).unwrap();
        for (t, d) in pr.difference_norms().iter().enumerate() {
            assert_relative_eq!(*d, libm::pow(2.0, t as f64), max_relative = 1e-9);
        }
    }

    #[test]
    fn paired_rollout_identical_start() {
        let sys = scalar_system(0.9);
        let xi = Vector::from_vec(vec![0.3]);
        let pr = paired_rollout(&sys, &NoiseStream::new(3), &xi, &xi, 25).unwrap();
        assert!(pr.difference_norms().iter().all(|&d| d == 0.0));
    }

    #[test]
    fn closed_loop_pairs_share_noise() {
        let plant = PlantModel::new(
            Arc::new(FnDynamics::new(1, 1, 1, |x: &Vector, u: &Vector| x * 1.2 + u, |x: &Vector| x.clone())),
            Matrix::from_element(1, 1, 0.01),
            Matrix::from_element(1, 1, 0.01),
            1.0,
        )
        .unwrap();
        let ctrl = static_feedback(0.8);
        let sys = ClosedLoop::new(&plant, &ctrl);
        // Linear closed loop: difference evolves noise-free as 0.4^t on x.
        let pr = paired_rollout(&sys, &NoiseStream::new(4), &Vector::from_vec(vec![1.0, 0.0]), &Vector::from_vec(vec![0.0, 0.0]), 20).unwrap();
        for (t, d) in pr.differences().iter().enumerate() {
            assert_relative_eq!(d[0], libm::pow(0.4, t as f64), max_relative = 1e-9, epsilon = 1e-14);
        }
    }
}
