//! Simulation core for a single-control, mixed-register atom interferometer.
//!
//! The crate is `no_std` (it needs `alloc`) and carries no IO. It covers:
//!
//! * [`analytic`]: closed-form outcome probabilities, Fisher information and
//!   sensitivity of the ideal protocol, plus Poisson-loading averages.
//! * [`rydberg`]: strongest-pair Rydberg interaction and the gate pulse shapes.
//! * [`trap`]: trap geometry, position sampling, density and loss statistics.
//! * [`lindblad`]: dense density matrices of four-level atoms and the
//!   master-equation machinery used for the EIT/blockade CNOT.
//! * [`experiment`]: Monte-Carlo orchestration of the full protocol, the
//!   simplified large-register model and the gravity preset.
//! * [`estimation`]: fringe fits, Fisher information from fitted models and
//!   sensitivity reports.
//!
//! Randomness is always passed in by the caller; every stochastic routine is
//! deterministic given its seed.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod analytic;
pub mod error;
pub mod estimation;
pub mod experiment;
pub mod lindblad;
pub mod rng;
pub mod rydberg;
pub mod trap;
pub mod units;

pub use error::{Error, Result};
pub use num_complex::Complex64 as C64;
