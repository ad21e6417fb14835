use crate::dynamics::PlantModel;
use crate::linalg::{ensure_len, symmetrize, Matrix, Vector};
use crate::{Error, Result};

/// Filtered estimate `x̂_{t|t}`, its covariance, and the innovation of the
/// update that produced it.
#[derive(Clone, Debug, PartialEq)]
pub struct EkfState {
    pub estimate: Vector,
    pub covariance: Matrix,
    pub residual: Vector,
    pub innovation_cov: Matrix,
}

impl EkfState {
    pub fn new(estimate: Vector, covariance: Matrix, output_dim: usize) -> Self {
        EkfState {
            estimate,
            covariance,
            residual: Vector::zeros(output_dim),
            innovation_cov: Matrix::zeros(output_dim, output_dim),
        }
    }
}

/// Predict with `u_prev`, then update with `y` (Joseph form).
pub fn ekf_step(plant: &PlantModel, prev: &EkfState, u_prev: &Vector, y: &Vector) -> Result<EkfState> {
    let n = plant.state_dim();
    ensure_len(&prev.estimate, n, "filter estimate")?;
    ensure_len(y, plant.output_dim(), "filter measurement")?;
    let dynamics = plant.dynamics();
    let f = dynamics.state_jacobian(&prev.estimate, u_prev);
    let x_pred = dynamics.transition(&prev.estimate, u_prev);
    let p_pred = symmetrize(&(&f * &prev.covariance * f.transpose() + plant.process_cov()));
    let h = dynamics.output_jacobian(&x_pred);
    let residual = y - dynamics.output(&x_pred);
    let s = symmetrize(&(&h * &p_pred * h.transpose() + plant.measurement_cov()));
    let chol = s.clone().cholesky().ok_or(Error::SingularInnovation)?;
    let gain = chol.solve(&(&h * &p_pred)).transpose();
    let estimate = x_pred + &gain * &residual;
    let correction = Matrix::identity(n, n) - &gain * &h;
    let covariance = symmetrize(
        &(&correction * &p_pred * correction.transpose() + &gain * plant.measurement_cov() * gain.transpose()),
    );
    Ok(EkfState {
        estimate,
        covariance,
        residual,
        innovation_cov: s,
    })
}
