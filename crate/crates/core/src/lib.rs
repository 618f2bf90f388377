//! Numerical toolkit for the kinetic Fokker-Planck equation
//! `∂_t P + v ∂_x P = ∂_vv P` on the half line `x > 0` with an inelastic
//! reflecting wall `P(0, -v) = r² P(0, r v)`.
//!
//! The crate covers the special functions behind the self-similar corner
//! profiles, the exponents and flux constants, a particle-level Monte Carlo
//! engine, a lattice random walk with three wall rules, and a finite volume
//! solver with a mass ledger for the singular corner.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod exponents;
pub mod fluxes;
pub mod kfp_solver;
pub mod lattice_toy;
pub mod particle_mc;
pub mod profiles;
pub mod quad;
pub mod specfun;
pub mod verify;

pub use error::{KfpError, Result, SpecFunError};
