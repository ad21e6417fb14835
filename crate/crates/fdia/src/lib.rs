//! File formats, reports and the command-line workflow around
//! [`fdia_core`].

pub mod commands;
pub mod config;
mod error;
pub mod manifest;
pub mod report;
pub mod traces;

pub use error::{AppError, AppResult};
