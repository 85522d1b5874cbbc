//! Rosenzweig–MacArthur predator–prey dynamics at three levels of description.
//!
//! * [`model`]: closed-form event rates, drift, covariance and its factorizations,
//!   equilibria and regime classification.
//! * [`ode`]: adaptive Dormand–Prince integration of the mean-field ODE.
//! * [`ctmc`]: exact (Gillespie direct method) simulation of the four-channel
//!   jump process on integer counts with absorbing axes.
//! * [`sde`]: absorbed Euler–Maruyama integration of the chemical-Langevin
//!   diffusion with event, Cholesky or diagonal noise factors, and the
//!   one-dimensional axis diffusions.
//!
//! The crate is `no_std` and only needs `alloc`. Randomness is supplied by the
//! caller through any [`rand::Rng`], so reproducibility is entirely a property of
//! the stream handed in.
#![cfg_attr(not(test), no_std)]
// `!(a < b)` deliberately rejects NaN along with out-of-order values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod ctmc;
mod error;
pub mod model;
pub mod ode;
mod params;
pub mod sde;
mod state;

pub use error::Error;
pub use params::ModelParams;
pub use state::{CountState, DensityState};

pub type Result<T, E = Error> = core::result::Result<T, E>;
