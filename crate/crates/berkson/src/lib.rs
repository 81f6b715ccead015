//! Nonparametric regression with Berkson-type covariate error.
//!
//! The observed proxy `X` relates to the latent regressor through
//! `X* = X + dX*`, the outcome through `Y = g(X*) + dY`, and an instrument
//! through `Z = h(X*) + dZ`, with all disturbances mutually independent and
//! centered. This crate estimates `g`, `h` and the three disturbance
//! densities jointly by sieve maximum likelihood:
//!
//! - [`sieve`]: polynomial regression sieves and baseline-weighted density
//!   sieves with exact linear-constraint elimination;
//! - [`likelihood`]: the latent-integral conditional density and the sample
//!   log-likelihood objective;
//! - [`simplex`]: a derivative-free simplex minimizer with rejection-based
//!   feasibility;
//! - [`estimator`]: initialization from naive least squares and the full
//!   fit;
//! - [`selection`]: bootstrap cross-validation over sieve orders;
//! - [`sim`]: scenario generation and the robust-vs-naive replication study;
//! - [`spectral`]: a desk-scale eigendecomposition check of the operator
//!   identification argument.

pub mod error;
pub mod estimator;
pub mod likelihood;
pub mod quad;
pub mod rng;
pub mod selection;
pub mod sieve;
pub mod sim;
pub mod simplex;
pub mod spectral;
pub mod sums;

pub use error::{Error, Result};
