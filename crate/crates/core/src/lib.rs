//! Simulation of a six-level Λ-type emitter that produces time-bin entangled
//! linear photonic cluster states.
//!
//! The crate covers the emitter model, an adaptive master-equation
//! propagator, pulse calibration, the emission protocol, multi-time photon
//! correlations via the quantum regression theorem, and the stabilizer
//! analysis built on top of them.

pub mod cli;
pub mod config;
pub mod correlations;
pub mod error;
pub mod model;
pub mod propagator;
pub mod protocol;
pub mod pulses;
pub mod stabilizers;

pub use error::{Error, Result};
