//! Sparse-processing particle image velocimetry.
//!
//! Velocity fields are compressed with proper orthogonal decomposition, a
//! linear model of the mode coefficients is fitted, a few interrogation
//! windows are chosen by greedy D-optimal selection, and the full field is
//! estimated from cross-correlation at those windows only.

pub mod error;
pub mod estimator;
pub mod flowdata;
pub mod harness;
pub mod io;
pub mod linalg;
pub mod piv;
pub mod pod;
pub mod rom;
pub mod sensors;
pub mod synth;

pub use error::{ContainerError, Error, Result};
