//! Deep splitting solvers for semilinear parabolic PDEs and PIDEs with jumps.
//!
//! The backward recursion fits one regression per time step on simulated
//! Euler paths, using either frozen random features with a least-squares
//! readout or fully trained dense networks.

// `!(x > 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod cli;
pub mod error;
pub mod model;
pub mod nets;
pub mod numkit;
pub mod oracle;
pub mod sde_sim;
pub mod splitting;

pub use error::{Error, Result};
