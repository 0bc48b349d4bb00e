//! Unstable equilibria of the two-dimensional Kuramoto–Sivashinsky equation.
//!
//! The crate couples a pseudospectral ETDRK4 simulator with a Jacobian-free
//! Newton–Krylov hookstep solver and a DDPG agent that searches for
//! low-residual initial guesses (or steers the flow toward a known
//! equilibrium).

pub mod actuation;
pub mod config;
pub mod ddpg;
pub mod dynamics;
pub mod error;
pub mod jfnk;
pub mod spectral;
pub mod store;
pub mod tasks;
pub mod validation;

pub use error::{KseError, Result};
