use crate::linalg::{ensure_len, Matrix, Vector};
use crate::Result;

/// Innovation (residual) produced by an estimator inside a controller.
#[derive(Clone, Debug, PartialEq)]
pub struct Innovation {
    pub residual: Vector,
    pub covariance: Matrix,
}

/// A feedback controller `𝒳_t = f_c(𝒳_{t-1}, y^c_t)`, `u_t = h_c(𝒳_t, y^c_t)`.
///
/// `State` is the controller memory. [`Controller::state_vector`] embeds it in
/// `ℝ^q` so that closed-loop distances can be measured; for estimators with
/// a covariance this is the state estimate only.
pub trait Controller: Send + Sync {
    type State: Clone + Send + Sync;

    /// Dimension `q` of [`Controller::state_vector`].
    fn internal_dim(&self) -> usize;
    fn measurement_dim(&self) -> usize;
    fn input_dim(&self) -> usize;

    /// Controller memory before the first measurement (`𝒳_{-1}`).
    fn initial_state(&self) -> Self::State;
    fn state_from_vector(&self, v: &Vector) -> Self::State;
    fn state_vector(&self, state: &Self::State) -> Vector;

    /// `f_c`.
    fn update(&self, prev: &Self::State, y: &Vector) -> Result<Self::State>;
    /// `h_c`, evaluated on the already updated state.
    fn control(&self, state: &Self::State, y: &Vector) -> Vector;

    fn innovation(&self, _state: &Self::State) -> Option<Innovation> {
        None
    }
}

/// One controller step: `f_c` first, then `h_c` on the updated state.
pub fn step_controller<C: Controller + ?Sized>(ctrl: &C, prev: &C::State, y: &Vector) -> Result<(C::State, Vector)> {
    ensure_len(y, ctrl.measurement_dim(), "controller measurement")?;
    let next = ctrl.update(prev, y)?;
    let u = ctrl.control(&next, y);
    ensure_len(&u, ctrl.input_dim(), "controller output")?;
    Ok((next, u))
}

/// Controller given by a pair of closures over a vector-valued memory.
pub struct FnController<F, H> {
    q: usize,
    p: usize,
    m: usize,
    f_c: F,
    h_c: H,
    initial: Vector,
}

impl<F, H> FnController<F, H>
where
    F: Fn(&Vector, &Vector) -> Vector + Send + Sync,
    H: Fn(&Vector, &Vector) -> Vector + Send + Sync,
{
    pub fn new(internal_dim: usize, measurement_dim: usize, input_dim: usize, f_c: F, h_c: H) -> Self {
        FnController {
            q: internal_dim,
            p: measurement_dim,
            m: input_dim,
            f_c,
            h_c,
            initial: Vector::zeros(internal_dim),
        }
    }

    pub fn with_initial(mut self, initial: Vector) -> Self {
        self.initial = initial;
        self
    }
}

impl<F, H> Controller for FnController<F, H>
where
    F: Fn(&Vector, &Vector) -> Vector + Send + Sync,
    H: Fn(&Vector, &Vector) -> Vector + Send + Sync,
{
    type State = Vector;

    fn internal_dim(&self) -> usize {
        self.q
    }
    fn measurement_dim(&self) -> usize {
        self.p
    }
    fn input_dim(&self) -> usize {
        self.m
    }
    fn initial_state(&self) -> Vector {
        self.initial.clone()
    }
    fn state_from_vector(&self, v: &Vector) -> Vector {
        v.clone()
    }
    fn state_vector(&self, state: &Vector) -> Vector {
        state.clone()
    }
    fn update(&self, prev: &Vector, y: &Vector) -> Result<Vector> {
        ensure_len(prev, self.q, "controller state")?;
        let next = (self.f_c)(prev, y);
        ensure_len(&next, self.q, "controller state")?;
        Ok(next)
    }
    fn control(&self, state: &Vector, y: &Vector) -> Vector {
        (self.h_c)(state, y)
    }
}
