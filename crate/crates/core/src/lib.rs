//! Phase synchronization of coupled bosonic modes with non-Hermitian
//! coupling: spectra and propagation, the collective-mode transform, polar
//! equations, thermal noise, frequency disorder and mediator elimination.

// `!(x > 0.0)` is used on purpose so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod disorder;
pub mod elimination;
pub mod error;
pub mod kuramoto;
pub mod linear;
pub mod params;
pub mod phase;
pub mod stats;
pub mod stochastic;

pub use error::{Error, Result};
