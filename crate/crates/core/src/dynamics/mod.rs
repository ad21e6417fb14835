//! Plant, controller and closed-loop evolution.
//!
//! Closed-loop timing used throughout the crate, for `t = 0, 1, …`:
//!
//! ```text
//! y_t   = h(x_t) + v_t             true output
//! y^c_t = y_t + a_t                received by the controller
//! 𝒳_t   = f_c(𝒳_{t-1}, y^c_t)
//! u_t   = h_c(𝒳_t, y^c_t)          uses the updated controller state
//! x_t+1 = f(x_t, u_t) + w_t
//! ```
//!
//! The closed-loop state at step `t` is the pair `(x_t, 𝒳_{t-1})`, i.e. the
//! plant state together with the controller memory that has not yet seen `y_t`.

mod controller;
mod noise;
mod plant;
mod sim;

pub use controller::{step_controller, Controller, FnController, Innovation};
pub use noise::{NoiseSample, NoiseStream};
pub use plant::{Dynamics, FnDynamics, LinearDynamics, PlantModel, StackedInput};
pub use sim::{
    paired_rollout, simulate_closed_loop, ClosedLoop, FnSystem, IncrementalSystem, Injection,
    PairedRollout, SignalInjection, SimulationOptions, StackedOpenLoop, Trajectory, DIVERGENCE_GUARD,
};
