//! Stealthy false-data-injection attacks on discrete-time feedback loops.
//!
//! The crate is `no_std` (with `alloc`) and covers the algorithmic side of the
//! toolkit:
//!
//! * [`dynamics`]: plant and controller models, counter-based noise streams,
//!   closed-loop rollouts and paired rollouts with shared noise.
//! * [`controllers`]: LTI output feedback, extended Kalman filter and the
//!   estimator-plus-state-feedback composition.
//! * [`attack`]: the attacker's internal dynamics, the injected signal, the
//!   virtual trajectory and full attack campaigns with their counterfactual.
//! * [`stealth`]: per-step KL terms, the closed-form stealthiness bound,
//!   a k-nearest-neighbour KL estimator and detector error sums.
//! * [`detectors`]: chi-squared residual detector, Gaussian likelihood-ratio
//!   detector, threshold calibration and ROC evaluation.
//! * [`stability`]: numerical incremental-stability probes, exact LTI spectral
//!   tests and the minimum compromised-sensor set.
//! * [`scenarios`]: the inverted pendulum case study and reference LTI benches.
//!
//! File formats, configuration parsing and the command-line front end live in
//! the companion `fdia` crate.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod attack;
pub mod controllers;
pub mod detectors;
pub mod dynamics;
mod error;
pub mod experiments;
pub mod linalg;
pub mod scenarios;
pub mod stability;
pub mod stealth;

pub use error::{Error, Result};
pub use linalg::{Matrix, Vector};
