//! Spectral flow and Maslov index computations for one-parameter families of
//! Hamiltonian systems Ju′(t) + S_λ(t)u(t) = 0 under homoclinic boundary
//! conditions.
//!
//! The crate computes three integers for such a family and cross-validates
//! them against each other:
//!
//! * the spectral flow of the induced operator path via crossing forms,
//! * the spectral flow of a truncated, discretized operator path via windowed
//!   eigenvalue counting,
//! * the relative Maslov index of the paths of unstable/stable subspaces
//!   λ ↦ E^u_λ(0), E^s_λ(0).
//!
//! On top of the verified identity it issues bifurcation certificates for
//! declared nonlinear families from their linearized data.

pub mod catalog;
pub mod error;
pub mod qforms;
pub mod hamsys;
pub mod specflow;
pub mod symplectic;
pub mod verify;

pub use error::{Error, Result};
