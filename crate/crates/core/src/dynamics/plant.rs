use alloc::format;
use alloc::sync::Arc;
use core::fmt;

use rand::Rng;
use rand_distr::StandardNormal;

use super::noise::{NoiseSample, NoiseStream};
use crate::linalg::{ensure_len, ensure_shape, ensure_square, is_positive_definite, is_psd, psd_factor, Matrix, Vector};
use crate::{Error, Result};

/// Step used by the central finite-difference Jacobians.
pub const FINITE_DIFFERENCE_STEP: f64 = 1e-6;

/// Noise-free plant maps `x' = f(x, u)` and `y = h(x)`.
///
/// The Jacobian methods act as the Jacobian provider for the extended Kalman
/// filter. The defaults use central differences; implementations with closed
/// forms should override them.
pub trait Dynamics: Send + Sync {
    fn state_dim(&self) -> usize;
    fn input_dim(&self) -> usize;
    fn output_dim(&self) -> usize;
    fn transition(&self, x: &Vector, u: &Vector) -> Vector;
    fn output(&self, x: &Vector) -> Vector;

    fn state_jacobian(&self, x: &Vector, u: &Vector) -> Matrix {
        central_difference(x, self.state_dim(), |xp| self.transition(xp, u))
    }

    fn output_jacobian(&self, x: &Vector) -> Matrix {
        central_difference(x, self.output_dim(), |xp| self.output(xp))
    }

    /// The `(A, B, C)` matrices when the maps are linear.
    fn as_linear(&self) -> Option<&LinearDynamics> {
        None
    }
}

fn central_difference(x: &Vector, rows: usize, map: impl Fn(&Vector) -> Vector) -> Matrix {
    let n = x.len();
    let mut jac = Matrix::zeros(rows, n);
    let mut probe = x.clone();
    for j in 0..n {
        let h = FINITE_DIFFERENCE_STEP * x[j].abs().max(1.0);
        probe[j] = x[j] + h;
        let plus = map(&probe);
        probe[j] = x[j] - h;
        let minus = map(&probe);
        probe[j] = x[j];
        jac.set_column(j, &((plus - minus) / (2.0 * h)));
    }
    jac
}

/// `x' = Ax + Bu`, `y = Cx`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearDynamics {
    pub a: Matrix,
    pub b: Matrix,
    pub c: Matrix,
}

impl LinearDynamics {
    pub fn new(a: Matrix, b: Matrix, c: Matrix) -> Result<Self> {
        let n = ensure_square(&a, "A")?;
        ensure_shape(&b, n, b.ncols(), "B")?;
        ensure_shape(&c, c.nrows(), n, "C")?;
        Ok(LinearDynamics { a, b, c })
    }

    pub fn scalar(a: f64, b: f64, c: f64) -> Self {
        LinearDynamics {
            a: Matrix::from_element(1, 1, a),
            b: Matrix::from_element(1, 1, b),
            c: Matrix::from_element(1, 1, c),
        }
    }
}

impl Dynamics for LinearDynamics {
    fn state_dim(&self) -> usize {
        self.a.nrows()
    }
    fn input_dim(&self) -> usize {
        self.b.ncols()
    }
    fn output_dim(&self) -> usize {
        self.c.nrows()
    }
    fn transition(&self, x: &Vector, u: &Vector) -> Vector {
        &self.a * x + &self.b * u
    }
    fn output(&self, x: &Vector) -> Vector {
        &self.c * x
    }
    fn state_jacobian(&self, _x: &Vector, _u: &Vector) -> Matrix {
        self.a.clone()
    }
    fn output_jacobian(&self, _x: &Vector) -> Matrix {
        self.c.clone()
    }
    fn as_linear(&self) -> Option<&LinearDynamics> {
        Some(self)
    }
}

/// Dynamics given as a pair of closures; Jacobians by finite differences.
pub struct FnDynamics<F, H> {
    n: usize,
    m: usize,
    p: usize,
    f: F,
    h: H,
}

impl<F, H> FnDynamics<F, H>
where
    F: Fn(&Vector, &Vector) -> Vector + Send + Sync,
    H: Fn(&Vector) -> Vector + Send + Sync,
{
    pub fn new(state_dim: usize, input_dim: usize, output_dim: usize, f: F, h: H) -> Self {
        FnDynamics {
            n: state_dim,
            m: input_dim,
            p: output_dim,
            f,
            h,
        }
    }
}

impl<F, H> Dynamics for FnDynamics<F, H>
where
    F: Fn(&Vector, &Vector) -> Vector + Send + Sync,
    H: Fn(&Vector) -> Vector + Send + Sync,
{
    fn state_dim(&self) -> usize {
        self.n
    }
    fn input_dim(&self) -> usize {
        self.m
    }
    fn output_dim(&self) -> usize {
        self.p
    }
    fn transition(&self, x: &Vector, u: &Vector) -> Vector {
        (self.f)(x, u)
    }
    fn output(&self, x: &Vector) -> Vector {
        (self.h)(x)
    }
}

/// Control input and process noise stacked as `U = [u; w]`.
#[derive(Clone, Debug, PartialEq)]
pub struct StackedInput {
    stacked: Vector,
    input_dim: usize,
}

impl StackedInput {
    pub fn new(u: &Vector, w: &Vector) -> Self {
        let mut stacked = Vector::zeros(u.len() + w.len());
        stacked.rows_mut(0, u.len()).copy_from(u);
        stacked.rows_mut(u.len(), w.len()).copy_from(w);
        StackedInput {
            stacked,
            input_dim: u.len(),
        }
    }

    pub fn as_vector(&self) -> &Vector {
        &self.stacked
    }

    pub fn control(&self) -> Vector {
        self.stacked.rows(0, self.input_dim).into_owned()
    }

    pub fn noise(&self) -> Vector {
        self.stacked.rows(self.input_dim, self.stacked.len() - self.input_dim).into_owned()
    }
}

/// A stochastic plant `x' = f(x, u) + w`, `y = h(x) + v` with Gaussian noises.
#[derive(Clone)]
pub struct PlantModel {
    dynamics: Arc<dyn Dynamics>,
    process_cov: Matrix,
    measurement_cov: Matrix,
    output_lipschitz: f64,
    process_factor: Matrix,
    measurement_factor: Matrix,
}

impl fmt::Debug for PlantModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PlantModel")
            .field("n", &self.state_dim())
            .field("m", &self.input_dim())
            .field("p", &self.output_dim())
            .field("process_cov", &self.process_cov)
            .field("measurement_cov", &self.measurement_cov)
            .field("output_lipschitz", &self.output_lipschitz)
            .finish()
    }
}

impl PlantModel {
    /// Validates covariance shapes, symmetry and semidefiniteness, and requires
    /// at least one of the two covariances to be positive definite.
    pub fn new(
        dynamics: Arc<dyn Dynamics>,
        process_cov: Matrix,
        measurement_cov: Matrix,
        output_lipschitz: f64,
    ) -> Result<Self> {
        let (n, p) = (dynamics.state_dim(), dynamics.output_dim());
        ensure_shape(&process_cov, n, n, "process covariance")?;
        ensure_shape(&measurement_cov, p, p, "measurement covariance")?;
        for (name, cov) in [("process", &process_cov), ("measurement", &measurement_cov)] {
            if !is_psd(cov) {
                return Err(Error::Config(format!("{name} covariance must be symmetric positive semidefinite")));
            }
        }
        if !is_positive_definite(&process_cov) && !is_positive_definite(&measurement_cov) {
            return Err(Error::Config(
                "at least one of the process and measurement covariances must be positive definite".into(),
            ));
        }
        if !(output_lipschitz >= 0.0 && output_lipschitz.is_finite()) {
            return Err(Error::Config("output Lipschitz constant must be finite and nonnegative".into()));
        }
        let process_factor = psd_factor(&process_cov)?;
        let measurement_factor = psd_factor(&measurement_cov)?;
        Ok(PlantModel {
            dynamics,
            process_cov,
            measurement_cov,
            output_lipschitz,
            process_factor,
            measurement_factor,
        })
    }

    pub fn dynamics(&self) -> &dyn Dynamics {
        self.dynamics.as_ref()
    }
    pub fn state_dim(&self) -> usize {
        self.dynamics.state_dim()
    }
    pub fn input_dim(&self) -> usize {
        self.dynamics.input_dim()
    }
    pub fn output_dim(&self) -> usize {
        self.dynamics.output_dim()
    }
    pub fn process_cov(&self) -> &Matrix {
        &self.process_cov
    }
    pub fn measurement_cov(&self) -> &Matrix {
        &self.measurement_cov
    }
    pub fn output_lipschitz(&self) -> f64 {
        self.output_lipschitz
    }

    /// `f(x, u) + w`.
    pub fn step(&self, x: &Vector, u: &Vector, w: &Vector) -> Result<Vector> {
        let n = self.state_dim();
        ensure_len(x, n, "plant state")?;
        ensure_len(u, self.input_dim(), "plant input")?;
        ensure_len(w, n, "process noise")?;
        Ok(self.dynamics.transition(x, u) + w)
    }

    /// `f_u(x, U)` for the stacked input `U = [u; w]`.
    pub fn step_stacked(&self, x: &Vector, input: &StackedInput) -> Result<Vector> {
        self.step(x, &input.control(), &input.noise())
    }

    /// `h(x) + v`.
    pub fn measure(&self, x: &Vector, v: &Vector) -> Result<Vector> {
        ensure_len(x, self.state_dim(), "plant state")?;
        ensure_len(v, self.output_dim(), "measurement noise")?;
        Ok(self.dynamics.output(x) + v)
    }

    /// Scaled noise `(w_t, v_t)` for step `t` of the stream.
    pub fn noise(&self, stream: &NoiseStream, t: i64) -> NoiseSample {
        let z = stream.standard_normals(t, self.state_dim(), self.output_dim());
        NoiseSample {
            process: &self.process_factor * z.process,
            measurement: &self.measurement_factor * z.measurement,
        }
    }

    /// Largest observed `‖h(x) − h(y)‖ / ‖x − y‖` over random pairs in a ball.
    ///
    /// A spot check of the declared Lipschitz constant, not a proof.
    pub fn sampled_output_lipschitz<R: Rng>(&self, radius: f64, samples: usize, rng: &mut R) -> f64 {
        let n = self.state_dim();
        let mut worst: f64 = 0.0;
        for _ in 0..samples {
            let x = Vector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal) * radius);
            let y = Vector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal) * radius);
            let d = (&x - &y).norm();
            if d > 0.0 {
                let r = (self.dynamics.output(&x) - self.dynamics.output(&y)).norm() / d;
                worst = worst.max(r);
            }
        }
        worst
    }
}
