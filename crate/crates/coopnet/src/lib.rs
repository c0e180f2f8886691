//! Deterministic, seedable simulator of cooperative ad hoc networks.
//!
//! The physical layer is a random geometric graph with a Rayleigh-fading
//! soft connection function; on top of it a continuous snowdrift
//! cooperation game evolves directed effort weights by clamped
//! explicit-Euler gradient dynamics. Connectivity observables (degree,
//! assortativity) of the evolving cooperation graph are the outputs.

pub mod cli;
pub mod config;
pub mod dynamics;
pub mod error;
pub mod experiments;
pub mod io;
pub mod matrix;
pub mod metrics;
pub mod model;
pub mod seed;

pub use error::{Error, Result};
