//! Numerical laboratory for the stationary Floquet–Bloch analysis of random
//! Schrödinger operators `-Δ + λV` with a stationary Gaussian potential.

pub mod chaos;
pub mod covariance;
pub mod error;
pub mod fermi;
pub mod fft;
pub mod fieldgen;
pub mod finomega;
pub mod flow;
pub mod mourre;
pub mod quad;
pub mod spectral;
pub mod stats;
pub mod toy;

pub use error::{Error, Result};

/// Library version recorded in experiment manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
