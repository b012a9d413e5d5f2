//! Two-time-scale scheduling, beamforming and energy trading for
//! smart-grid-powered cellular networks.

pub mod baselines;
pub mod config;
pub mod controller;
pub mod energy;
pub mod error;
pub mod metrics;
pub mod model;
pub mod oracle;
pub mod queueing;
pub mod sim;
pub mod solver;
#[cfg(test)]
mod testutil;

pub use error::{Error, Result};
