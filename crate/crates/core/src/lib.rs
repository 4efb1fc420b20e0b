//! Core of the switched visual tracker.
//!
//! A pursuer with a forward-facing camera follows a target moving in the
//! yz-plane. While the target is in view the pursuer runs a saturated PD
//! tracking law; when it is lost the pursuer backs off to a recovery pose
//! from which the target's whole reachable set is inside the camera cone.
//! The [`stability`] module checks recorded runs against the average stable
//! dwell-time bound for this kind of two-mode switched system.
//!
//! Everything here is `no_std` + `alloc`. File formats, sweeps and the CLI
//! live in the `svt-sim` crate.
#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod controller;
pub mod error;
pub mod perception;
pub mod reach;
pub mod scenario;
pub mod sim;
pub mod stability;
pub mod trace;
mod vec3;

pub use error::Error;
pub use vec3::Vec3;

/// Simulation clock shared by every module (100 Hz camera rate).
pub const DEFAULT_DT: f64 = 0.01;
