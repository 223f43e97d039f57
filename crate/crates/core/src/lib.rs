//! Lattice realizations of the free Markov field, Wick-ordered P(φ)₂
//! interactions, and the Feynman–Kac–Nelson semigroup, with executable
//! checks of their structural identities.

pub mod acceptance;
pub mod covariance;
pub mod gaussian;
pub mod interaction;
pub mod error;
pub mod lattice;
pub mod markov;
pub mod mc;
pub mod quadrature;
pub mod rng;
pub mod transfer;

pub use error::{Error, Result};
