//! Pilot-free multi-user uplink sensing and communication.
//!
//! Several single-antenna users transmit unknown messages through unknown
//! multipath channels to a multi-antenna base station. Each user's channel
//! is a sparse sum of atoms in a three-dimensional (delay, Doppler, angle)
//! continuum. This crate recovers path parameters and messages jointly by
//! atomic-norm minimization, solved as a semidefinite program with a
//! built-in operator-splitting solver, then localizes a common target by
//! fusing the per-user estimates.
//!
//! The main entry points are:
//!
//! * [`model`]: scene generation and measurement synthesis,
//! * [`sdp::solve_primal`] and [`sdp::solve_dual`],
//! * [`mapp3d::decompose`] for off-grid parameter extraction from a
//!   three-level Toeplitz matrix,
//! * [`dualpoly`] and [`fusion`] for dual-certificate based estimation,
//! * [`locate`] for target localization and [`decode`] for message recovery,
//! * [`experiments`] for the reproducible experiment runner.

pub mod atoms;
pub mod decode;
pub mod dualpoly;
pub mod error;
pub mod experiments;
pub mod fusion;
pub mod linalg;
pub mod locate;
pub mod mapp3d;
pub mod model;
pub mod rng;
pub mod sdp;
mod serde_mat;

pub use atoms::{steering_vector, Axis, Dims, Zeta};
pub use error::{Error, Result};
pub use model::{generate_scene, simulate, synthesize_measurements, MeasurementSet, Scene, SceneConfig};
