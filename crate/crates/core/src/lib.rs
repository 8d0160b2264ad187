//! Design of programmable multi-qubit XX gates on trapped-ion crystals.
//!
//! The pipeline runs bottom-up through the modules:
//!
//! * [`crystal`] builds transverse normal modes for an equally spaced chain.
//! * [`spectrum`] picks harmonic drive tones and the kernel basis that
//!   closes every motional displacement at the gate time.
//! * [`coupling`] evaluates the per-mode quadratic forms that map drive
//!   amplitudes to pairwise entanglement phases.
//! * [`targets`] generates entanglement target matrices.
//! * [`zeropool`] collects drive vectors that accumulate no phase at all.
//! * [`lsf`] turns pool entries into drives for a chosen target and refines
//!   them toward lower total power.
//! * [`analysis`] and [`simkit`] score and verify the resulting drives.

pub mod analysis;
pub mod coupling;
pub mod crystal;
pub mod design;
pub mod error;
pub mod integrals;
pub mod io;
pub mod linalg;
pub mod lsf;
pub mod simkit;
pub mod spectrum;
pub mod targets;
pub mod zeropool;

pub use error::{LsfError, Result};
