//! Simulation and estimation kernel for a two-color polarization-entanglement
//! quantum-memory experiment.
//!
//! The crate is `no_std` (it needs `alloc`). Everything here is a pure
//! function of its inputs plus an explicit seed; file formats, the command
//! line and parallel drivers live in the `qmem` companion crate.
//!
//! Two-qubit states use the basis order `HH, HV, VH, VV` throughout. The
//! first slot is Signal 1 (the telecom photon), the second slot is Signal 2
//! (the 795 nm photon, or the atomic spin wave while it is stored).

#![no_std]
#![warn(missing_debug_implementations)]
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod detection;
pub mod error;
pub mod estimators;
pub mod interferometer;
pub mod memory;
pub mod pipeline;
pub mod qstate;
pub mod rng;
pub mod source;

pub use error::{Error, Result};
pub use qstate::{PolarizationKet, Projector, TwoQubitState};
