//! Random streams, distributions, special functions, quadrature and SPD solves.

pub mod dist;
pub mod linalg;
pub mod quad;
pub mod rng;
pub mod special;

pub use dist::{
    fill_normal, fill_uniform_cube, fill_uniform_sphere, sample_gamma, sample_normal, sample_poisson,
    sample_uniform_cube, sample_uniform_sphere,
};
pub use linalg::{cholesky_solve, RidgeSolution, SpdSystem};
pub use quad::{integrate, QuadResult};
pub use rng::{derive_seed, purpose, substream, RngStream};
pub use special::{
    inverse_regularized_gamma_q, inverse_regularized_gamma_q_ln, ln_gamma, ln_regularized_gamma_q, regularized_gamma_p,
    regularized_gamma_q,
};
