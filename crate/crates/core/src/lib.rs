//! Mixed-traffic ring-road microsimulation.
//!
//! The crate is organised bottom-up:
//!
//! * [`sim`] owns the ring world, Euler integration and rollout orchestration.
//! * [`controllers`] holds the longitudinal control laws (IDM, FollowerStopper,
//!   PI with saturation, bilateral control, linear ACC).
//! * [`nn`] is a small dense-network substrate used by every learned component.
//! * [`human`] models human drivers: behavioural cloning at short headway and
//!   sampled acceleration perturbations otherwise.
//! * [`congestion`] labels sensing-zone snapshots and trains the stage classifier.
//! * [`rl`] wraps the ring as an environment and trains policies with PPO.
//! * [`metrics`] computes TTC, DRAC, fuel economy and throughput.
//! * [`data`] ingests trajectory CSVs and extracts car-following samples.

pub mod congestion;
pub mod controllers;
pub mod data;
pub mod error;
pub mod human;
pub mod metrics;
pub mod nn;
pub mod rl;
pub mod sim;

pub use error::{Error, Result};

/// Hard bound on any acceleration that reaches the integrator (m/s²).
pub const ACCEL_BOUND: f64 = 3.0;
