//! Ensembles, file formats and the command-line front end for the
//! stochastic Rosenzweig–MacArthur toolkit built on [`rmcle_core`].

// `!(a < b)` deliberately rejects NaN along with out-of-order values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod io;
pub mod montecarlo;
pub mod rng;

pub use rmcle_core as core;

pub const TOOLKIT_VERSION: &str = env!("CARGO_PKG_VERSION");
