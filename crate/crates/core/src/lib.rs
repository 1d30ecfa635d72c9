//! Bayesian reconstruction of one-dimensional channel beds from sparse,
//! time-resolved free-surface measurements.
//!
//! The pieces compose as follows: [`swe`] maps a bed profile to sensor
//! records, [`observe`] produces and calibrates those records, [`priors`] and
//! [`posterior`] turn them into a log-posterior over either the two bump
//! parameters or a gridded bed, [`mcmc`] samples it with Metropolis–Hastings,
//! and [`stats`] summarizes the chains.

pub mod error;
pub mod fields;
pub mod mcmc;
pub mod observe;
pub mod posterior;
pub mod priors;
pub mod stats;
pub mod swe;

pub use error::{Error, Result};
