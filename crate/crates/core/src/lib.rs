//! Mesoscopic thermo-magnetic micromagnetics.
//!
//! The magnetization is described by per-cell Young measures on a fixed atom
//! dictionary, coupled to a dissipative phase field `λ ∈ ℝ^{d+1}` through an
//! H⁻¹ penalty, and to temperature through an enthalpy-form heat equation.
//! Each time step solves a convex incremental minimization followed by an
//! implicit heat step; the [`audit`] module checks the discrete inequalities
//! that every accepted step must satisfy.

pub mod error;
pub mod grid;
pub mod material;
pub mod schedule;
pub mod measure;
pub mod elliptic;
pub mod energy;
mod apg;
pub mod increment;
pub mod heat;
pub mod audit;
pub mod config;
pub mod experiments;
pub mod io;

pub use error::{Error, Result};
