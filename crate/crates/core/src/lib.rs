//! Debiased machine learning inference with simultaneous confidence bands.
//!
//! The crate covers orthogonal scores for linear moment functionals, Riesz
//! representers, cross-fitting, sup-t critical values, CDF bands, numeric
//! finite-sample Gaussian approximation bounds and a Monte Carlo harness.

pub mod bounds;
pub mod cli;
pub mod error;
pub mod inference;
pub mod model;
pub mod montecarlo;
pub mod nuisance;
pub mod numeric;
pub mod rng;
pub mod scores;

pub use error::{DmlError, Result};
