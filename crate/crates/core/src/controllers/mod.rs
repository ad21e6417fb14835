//! Feedback controllers.
//!
//! [`LtiController`] is a generic linear output-feedback law with explicit
//! matrices, used for exact spectral analysis. [`FeedbackController`] runs an
//! extended Kalman filter and applies linear state feedback to the estimate;
//! it exposes the filter innovation to residual detectors.

mod ekf;
mod feedback;
mod lti;

pub use ekf::{ekf_step, EkfState};
pub use feedback::FeedbackController;
pub use lti::{closed_loop_matrix, LtiController};
