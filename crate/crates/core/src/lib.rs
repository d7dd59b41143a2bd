//! Simulation and analysis of a data market in which sellers advertise data
//! quality through free samples and a single buyer procures through an
//! approximately optimal Bayesian incentive-compatible mechanism.
//!
//! The crate is organized bottom-up:
//!
//! - [`params`]: market constants, seller realizations, strategy profiles.
//! - [`cost`]: cost distributions and the virtual-cost transform.
//! - [`belief`]: sample-variance signals and the buyer's posterior.
//! - [`mechanism`]: winner selection, floored allocation, Myerson payments.
//! - [`simulator`]: Monte Carlo rounds, utility estimates, deviation tables.
//! - [`equilibrium`]: equilibrium detection and phase-diagram sweeps.
//! - [`bic`]: empirical incentive-compatibility check of the mechanism.
//! - [`config`] and [`report`]: config files and CSV schemas.
//! - [`commands`]: the batch commands and run manifests behind the binary.

pub mod belief;
pub mod bic;
pub mod commands;
pub mod config;
pub mod cost;
pub mod equilibrium;
pub mod error;
pub mod mechanism;
pub mod params;
pub mod report;
pub mod rng;
pub mod simulator;

pub use error::{MarketError, Result};
