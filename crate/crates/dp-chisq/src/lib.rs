//! Differentially private chi-squared hypothesis testing.
//!
//! Goodness-of-fit and independence tests for categorical data where the cell
//! counts are released through the Laplace or Gaussian mechanism. Alongside
//! the classical tests, the crate provides Monte-Carlo variants that sample
//! the exact finite-n law of the private statistic, and asymptotic variants
//! that compute critical values from the law of a quadratic form of Gaussians
//! (a weighted sum of noncentral chi-squared variables plus a Gaussian term),
//! evaluated by numerical inversion of its characteristic function.
//!
//! Layout:
//! - [`model`]: probability vectors, count tables, hypotheses, multinomial
//!   sampling.
//! - [`privacy`]: noise calibration and per-cell mechanisms.
//! - [`stats`]: chi-squared statistics and the independence MLE.
//! - [`quadform`]: tail probabilities, critical values, and sampling for
//!   weighted chi-squared laws.
//! - [`asymptotics`]: covariance/weight matrix constructions that feed
//!   [`quadform`].
//! - [`denoise`]: elastic-net projection of noisy tables and the two-step MLE.
//! - [`testing`]: the decision procedures.
//! - [`harness`]: experiment sweeps and the command-line interface.

pub mod asymptotics;
pub mod denoise;
pub mod error;
pub mod harness;
pub mod model;
pub mod privacy;
pub mod quadform;
pub mod stats;
pub mod testing;

pub use error::{Error, Result};
