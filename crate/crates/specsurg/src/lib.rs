//! Half-line matrix Schrödinger operators with general selfadjoint boundary
//! conditions, and bound-state surgery through closed-form Gel'fand–Levitan
//! transformations.
//!
//! The equation is `-ψ'' + V(x)ψ = k²ψ` on `x > 0` with a hermitian `n×n`
//! potential and the boundary condition `-B†ψ(0) + A†ψ'(0) = 0`.
//!
//! Modules, bottom up:
//! - [`matops`]: pseudoinverses, projections, hermitian square roots.
//! - [`potential`]: potentials, boundary matrices, validation, JSON files.
//! - [`ode`] and [`solver`]: Jost, regular and growing solutions, `J(k)`, `S(k)`.
//! - [`spectra`]: bound states and their normalization data.
//! - [`surgery`]: remove, decrease, add, increase.
//! - [`verify`]: golden data, invariant batteries, Parseval check.
//! - [`cli`]: the `specsurg` command line.

pub mod cli;
pub mod error;
pub mod grid;
pub mod jsonfmt;
pub mod matops;
pub mod ode;
pub mod potential;
pub mod solver;
pub mod spectra;
pub mod surgery;
pub mod verify;

pub use error::{Error, Result};
pub use matops::{CMat, C64};
pub use potential::{BoundaryCondition, Potential, Problem};
pub use solver::{MatrixSolution, SolverConfig};


pub use spectra::{BoundState, Spectrum};
pub use surgery::{SurgeryPlan, SurgeryResult};
