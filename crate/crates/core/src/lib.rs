//! Perturbed Runge-Kutta methods for mixed-precision time integration.
//!
//! A perturbed method splits its stage work between a full-precision operator
//! `F` and a cheaper perturbed operator `F^ε` (a chopped, loosely solved, or
//! coarser version of `F`). The crate provides
//!
//! - [`tableau`]: perturbed Butcher tableaux, a library of methods, correction
//!   steps, and JSON tableau files;
//! - [`conditions`]: consistency and perturbation order conditions;
//! - [`precision`]: significand chopping and the other ways of producing `F^ε`;
//! - [`problems`]: van der Pol, periodic diffusion, and the scalar test equation;
//! - [`integrator`]: fixed-step integration with Newton stage solves;
//! - [`harness`]: step-size sweeps, slope fits, and experiment files.

pub mod conditions;
pub mod error;
pub mod harness;
pub mod integrator;
pub mod precision;
pub mod problems;
pub mod tableau;

pub use error::{Error, Result};
