//! Phase operators on truncated Fock spaces.
//!
//! The crate covers the Susskind–Glogower and Pegg–Barnett constructions,
//! the canonical covariant phase measurement and its moment operators,
//! Bayes-risk optimal covariant estimation, and an emulation of the
//! very-large-dimension ("macroscopic") extension of bounded operators.
//!
//! Conventions: ħ = ω = 1, number states |0⟩..|s−1⟩, phase grid
//! θ_m = 2πm/s starting at 0.

pub mod error;
pub mod estimation;
pub mod fock_core;
pub mod macroscopic;
pub mod operator;
pub mod phase_ops;
pub mod phase_pom;

pub use error::{PhaseError, Result};
pub use fock_core::{FockDim, PhysicalConvention, StateVector};
pub use num_complex::Complex64;
pub use operator::DenseOperator;
