//! Numerical workbench for enhanced quantization.
//!
//! The crate builds canonical, affine and spin coherent-state families,
//! evaluates enhanced classical Hamiltonians `H(p,q) = <p,q|H|p,q>`,
//! measures the (2ħ-scaled) Fubini–Study geometry of each family,
//! integrates classical and enhanced classical flows, and scans the
//! multiplicative field inequality that separates n ≤ 4 from n ≥ 5.
//!
//! Module map:
//!
//! * [`hilbert`]: truncated Fock and spin spaces, operators, unitaries.
//! * [`quadrature`]: generalized Gauss–Laguerre rules and adaptive
//!   Gauss–Kronrod integration.
//! * [`coherent`]: the three coherent-state families.
//! * [`wcp`]: operator Hamiltonian specs and the weak-correspondence map.
//! * [`geometry`]: Fubini–Study metrics and Gaussian curvature.
//! * [`dynamics`]: implicit-midpoint integration of classical flows.
//! * [`inequality`]: radial quadrature of the singular field family.
//! * [`fit`]: least-squares line fits.
//! * [`selftest`]: aggregated invariant checks used by the CLI.

pub mod coherent;
pub mod dynamics;
pub mod error;
pub mod fit;
pub mod geometry;
pub mod hilbert;
pub mod inequality;
pub mod quadrature;
pub mod report;
pub mod selftest;
pub mod wcp;

#[cfg(test)]
mod properties;

pub use error::{Error, Result};

/// Library version.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Complex scalar used throughout.
pub type C64 = num_complex::Complex64;
