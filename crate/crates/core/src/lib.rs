//! Numerics for lossless postselected quantum metrology with quasi-pure
//! mixed states.
//!
//! The crate computes quantum Fisher information through symmetric
//! logarithmic derivatives, detects the quasi-pure structure of a parametric
//! density-operator family, constructs lossless postselection POVMs, and
//! ships three ready-made applications: superresolution imaging of two point
//! sources, two-qubit unitary estimation, and ancilla-assisted unitary
//! estimation with engineered classical correlations.
//!
//! Modules:
//!
//! - [`linalg`] — dense complex matrix primitives (Hermitian eigensolver,
//!   PSD square root, span projectors).
//! - [`state`] — parametric density operators, derivatives, spectral and
//!   global support/kernel/tangent structure.
//! - [`qfi`] — SLD and QFI engines, per-outcome Fisher decompositions,
//!   convexity and partial-commutativity diagnostics.
//! - [`quasipure`] — the quasi-pure criteria and residual report.
//! - [`postselect`] — POVM construction, measurement application, error
//!   metrics and amplification ratios.
//! - [`apps`] — the three applications plus their closed-form references.
//! - [`verify`] — seeded cross-module property suites.

pub mod apps;
pub mod error;
pub mod linalg;
pub mod postselect;
pub mod qfi;
pub mod quasipure;
pub mod state;
pub mod verify;

pub use error::{Error, Result};
pub use linalg::{CMatrix, CVector};
