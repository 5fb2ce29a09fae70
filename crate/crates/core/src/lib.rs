//! Perturbation toolkit for unital *-subalgebras of matrix algebras.
//!
//! Given two nearby subalgebras `N`, `M` of an ambient algebra `L` with
//! conditional expectations, the crate builds a *-isomorphism
//! `Phi: N -> M` close to the identity and a unitary `u` close to `I` with
//! `u M u* = N`, checking every intermediate estimate numerically.

pub mod algebra;
pub mod basic;
pub mod checks;
pub mod dixmier;
pub mod error;
pub mod expectation;
pub mod format;
pub mod harness;
pub mod hull;
pub mod linalg;
pub mod perturbation;
pub mod rng;

pub use error::{Error, Result};
pub use linalg::{Matrix, ToleranceProfile};
