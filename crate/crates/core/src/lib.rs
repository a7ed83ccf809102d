//! Photodetection-assisted quantum sensing toolkit.
//!
//! Building blocks, bottom to top:
//!
//! * [`qlin`]: dense complex matrices, Pauli strings, matrix exponentials.
//! * [`protocols`]: sensor codes with jump channels, feedback corrections and
//!   dephasing-correction strategies.
//! * [`trajectory`]: Monte-Carlo quantum-jump engine with detector imperfections.
//! * [`master`]: deterministic (corrected) Lindblad integration.
//! * [`klcheck`]: Knill–Laflamme and diagonal-only correctability checks.
//! * [`analytic`]: closed-form delayed-correction model.
//! * [`estimate`]: damped-cosine fitting, sensitivity and scaling exponents.

pub mod analytic;
pub mod estimate;
pub mod klcheck;
pub mod master;
pub mod protocols;
pub mod qlin;
pub mod trajectory;

pub use qlin::{Axis, DensityMatrix, Operator, StateVector, C64};
