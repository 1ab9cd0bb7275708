//! Sparse principal components of multivariate functional data.
//!
//! Curves observed with noise on a regular grid are smoothed into a histogram basis,
//! the leading component is fitted by a penalized rank-one M-estimator, and the
//! [`harness`] runs Monte Carlo experiments around it.

pub mod adversarial;
pub mod basis;
pub mod covariance;
pub mod error;
pub mod estimator;
pub mod fnspace;
pub mod harness;
pub mod quad;
pub mod simulate;
pub mod tuning;

pub use error::{Error, Result};
