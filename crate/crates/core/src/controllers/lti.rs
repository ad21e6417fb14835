use crate::dynamics::{Controller, LinearDynamics};
use crate::linalg::{ensure_shape, ensure_square, Matrix, Vector};
use crate::Result;

/// `𝒳_t = A_c 𝒳_{t-1} + B_c y_t`, `u_t = C_c 𝒳_t + D_c y_t`.
#[derive(Clone, Debug, PartialEq)]
pub struct LtiController {
    pub a_c: Matrix,
    pub b_c: Matrix,
    pub c_c: Matrix,
    pub d_c: Matrix,
    pub initial: Vector,
}

impl LtiController {
    pub fn new(a_c: Matrix, b_c: Matrix, c_c: Matrix, d_c: Matrix) -> Result<Self> {
        let q = ensure_square(&a_c, "controller A_c")?;
        let p = b_c.ncols();
        let m = c_c.nrows();
        ensure_shape(&b_c, q, p, "controller B_c")?;
        ensure_shape(&c_c, m, q, "controller C_c")?;
        ensure_shape(&d_c, m, p, "controller D_c")?;
        Ok(LtiController {
            a_c,
            b_c,
            c_c,
            d_c,
            initial: Vector::zeros(q),
        })
    }

    /// Memoryless output feedback `u = D y`.
    pub fn static_gain(d: Matrix) -> Self {
        let (m, p) = d.shape();
        LtiController {
            a_c: Matrix::zeros(0, 0),
            b_c: Matrix::zeros(0, p),
            c_c: Matrix::zeros(m, 0),
            d_c: d,
            initial: Vector::zeros(0),
        }
    }

    /// Current-estimate observer with state feedback: the memory is the
    /// filtered estimate `x̂_{t|t}` and `u_t = −K x̂_{t|t}`.
    pub fn observer(plant: &LinearDynamics, gain: &Matrix, filter_gain: &Matrix) -> Result<Self> {
        let n = plant.a.nrows();
        let (m, p) = (plant.b.ncols(), plant.c.nrows());
        ensure_shape(gain, m, n, "feedback gain")?;
        ensure_shape(filter_gain, n, p, "filter gain")?;
        let correction = Matrix::identity(n, n) - filter_gain * &plant.c;
        let a_c = correction * (&plant.a - &plant.b * gain);
        Self::new(a_c, filter_gain.clone(), -gain, Matrix::zeros(m, p))
    }

    pub fn with_initial(mut self, initial: Vector) -> Result<Self> {
        crate::linalg::ensure_len(&initial, self.a_c.nrows(), "controller initial state")?;
        self.initial = initial;
        Ok(self)
    }
}

impl Controller for LtiController {
    type State = Vector;

    fn internal_dim(&self) -> usize {
        self.a_c.nrows()
    }
    fn measurement_dim(&self) -> usize {
        self.d_c.ncols()
    }
    fn input_dim(&self) -> usize {
        self.d_c.nrows()
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
        Ok(&self.a_c * prev + &self.b_c * y)
    }
    fn control(&self, state: &Vector, y: &Vector) -> Vector {
        &self.c_c * state + &self.d_c * y
    }
}

/// Noise-free closed-loop matrix acting on `(x_t, 𝒳_{t-1})`.
pub fn closed_loop_matrix(plant: &LinearDynamics, ctrl: &LtiController) -> Result<Matrix> {
    let n = plant.a.nrows();
    let q = ctrl.a_c.nrows();
    ensure_shape(&ctrl.b_c, q, plant.c.nrows(), "controller B_c")?;
    ensure_shape(&ctrl.c_c, plant.b.ncols(), q, "controller C_c")?;
    let mut m = Matrix::zeros(n + q, n + q);
    let direct = &ctrl.c_c * &ctrl.b_c + &ctrl.d_c;
    m.view_mut((0, 0), (n, n)).copy_from(&(&plant.a + &plant.b * direct * &plant.c));
    m.view_mut((0, n), (n, q)).copy_from(&(&plant.b * &ctrl.c_c * &ctrl.a_c));
    m.view_mut((n, 0), (q, n)).copy_from(&(&ctrl.b_c * &plant.c));
    m.view_mut((n, n), (q, q)).copy_from(&ctrl.a_c);
    Ok(m)
}
