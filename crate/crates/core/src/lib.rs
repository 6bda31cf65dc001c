//! Conditional density approximation for an unobserved component of a
//! multivariate regularly varying vector, given that the observed
//! components are large.

pub mod angular;
pub mod baselines;
pub mod dataio;
pub mod distribution;
pub mod error;
pub mod margins;
pub mod optim;
pub mod ppfit;
pub mod predict;
pub mod pipeline;
pub mod quadrature;
pub mod records;
pub mod scoring;
pub mod simulate;
pub mod stats;

pub use error::{Error, Result};
