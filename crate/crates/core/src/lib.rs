//! Construction, certification, and simulation of deep Markov models with
//! provable mean-square stability.
//!
//! The crate turns a pair of feedforward networks (transition mean and
//! diagonal noise scale) into a state-space model, extracts exact
//! pointwise-affine forms of those networks, measures induced operator
//! norms, and from these produces contraction certificates, equilibrium
//! bounds, constrained weight constructions, and seeded stochastic
//! rollouts with empirical moment diagnostics.
//!
//! Module map:
//! - [`netcore`]: networks, activations, evaluation, JSON wire format.
//! - [`pwa`]: input-anchored affine forms (A(x), b(x)).
//! - [`spectral`]: operator norms, eigenvalues, gain bounds, layer products.
//! - [`factorize`]: weight constructions with prescribed spectral bands.
//! - [`dmm`]: the Markov model, sampling streams, region constraints.
//! - [`sim`]: rollouts, moments, fixed points, phase-portrait grids.
//! - [`certify`]: layer-wise certificates, grid evidence, equilibrium
//!   bounds, penalty functionals.

pub mod certify;
pub mod dmm;
pub mod error;
pub mod factorize;
pub mod netcore;
pub mod pwa;
pub mod sim;
pub mod spectral;
pub mod tol;

pub use error::{Error, Result};
