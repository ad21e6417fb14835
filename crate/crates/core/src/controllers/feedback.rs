use super::ekf::{ekf_step, EkfState};
use super::lti::LtiController;
use crate::dynamics::{Controller, Innovation, PlantModel};
use crate::linalg::{ensure_len, ensure_shape, steady_state_kalman, Matrix, Vector};
use crate::{Error, Result};

/// Extended Kalman filter followed by `u_t = −K x̂_{t|t}`.
///
/// The memory is the filter state; its vector embedding is the estimate
/// alone. [`Controller::state_from_vector`] attaches the initial covariance.
#[derive(Clone, Debug)]
pub struct FeedbackController {
    plant: PlantModel,
    gain: Matrix,
    initial: EkfState,
}

impl FeedbackController {
    pub fn new(plant: PlantModel, gain: Matrix, estimate: Vector, covariance: Matrix) -> Result<Self> {
        let (n, m, p) = (plant.state_dim(), plant.input_dim(), plant.output_dim());
        ensure_shape(&gain, m, n, "feedback gain")?;
        ensure_len(&estimate, n, "initial estimate")?;
        ensure_shape(&covariance, n, n, "initial estimate covariance")?;
        let initial = EkfState::new(estimate, covariance, p);
        Ok(FeedbackController { plant, gain, initial })
    }

    /// For a linear plant: start the filter at the steady-state filtered
    /// covariance, which then stays fixed, so the loop is exactly linear.
    pub fn steady_state(plant: PlantModel, gain: Matrix) -> Result<Self> {
        let lin = plant
            .dynamics()
            .as_linear()
            .ok_or(Error::Unsupported("steady-state filter requires a linear plant"))?;
        let (p_pred, l) = steady_state_kalman(&lin.a, &lin.c, plant.process_cov(), plant.measurement_cov())?;
        let n = lin.a.nrows();
        let filtered = (Matrix::identity(n, n) - &l * &lin.c) * p_pred;
        let filtered = crate::linalg::symmetrize(&filtered);
        Self::new(plant, gain, Vector::zeros(n), filtered)
    }

    pub fn plant(&self) -> &PlantModel {
        &self.plant
    }
    pub fn gain(&self) -> &Matrix {
        &self.gain
    }
    pub fn initial_filter(&self) -> &EkfState {
        &self.initial
    }

    /// Equivalent [`LtiController`] for a linear plant with steady-state
    /// filter.
    pub fn as_lti(&self) -> Result<LtiController> {
        let lin = self
            .plant
            .dynamics()
            .as_linear()
            .ok_or(Error::Unsupported("linear form requires a linear plant"))?;
        let (_, l) = steady_state_kalman(&lin.a, &lin.c, self.plant.process_cov(), self.plant.measurement_cov())?;
        LtiController::observer(lin, &self.gain, &l)?.with_initial(self.initial.estimate.clone())
    }
}

impl Controller for FeedbackController {
    type State = EkfState;

    fn internal_dim(&self) -> usize {
        self.plant.state_dim()
    }
    fn measurement_dim(&self) -> usize {
        self.plant.output_dim()
    }
    fn input_dim(&self) -> usize {
        self.plant.input_dim()
    }
    fn initial_state(&self) -> EkfState {
        self.initial.clone()
    }
    fn state_from_vector(&self, v: &Vector) -> EkfState {
        EkfState {
            estimate: v.clone(),
            ..self.initial.clone()
        }
    }
    fn state_vector(&self, state: &EkfState) -> Vector {
        state.estimate.clone()
    }
    fn update(&self, prev: &EkfState, y: &Vector) -> Result<EkfState> {
        let u_prev = -(&self.gain * &prev.estimate);
        ekf_step(&self.plant, prev, &u_prev, y)
    }
    fn control(&self, state: &EkfState, _y: &Vector) -> Vector {
        -(&self.gain * &state.estimate)
    }
    fn innovation(&self, state: &EkfState) -> Option<Innovation> {
        Some(Innovation {
            residual: state.residual.clone(),
            covariance: state.innovation_cov.clone(),
        })
    }
}
