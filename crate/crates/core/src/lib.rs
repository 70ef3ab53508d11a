//! Two-color Poissonized Pólya urns: event-driven simulation, exact
//! mixed-moment trajectories, Gamma limit laws, and statistical checks
//! that tie the three together.

pub mod cli;
pub mod error;
pub mod limit_theory;
pub mod moment_engine;
pub mod process_sim;
pub mod stats_verify;
pub mod urn_model;

pub use error::{Error, Result};
