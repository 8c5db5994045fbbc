//! Correlated Gaussian random energy models on the hypercube {−1, +1}^N.
//!
//! Finite-N checks of what makes the quenched free energy superadditive.
//! [`audit`] tests the covariance condition exhaustively; [`interp`]
//! estimates the derivative of the interpolation between a system and its
//! two independent halves; [`thermo`] compares the resulting free energies.

pub mod audit;
pub mod cli;
pub mod disorder;
pub mod error;
pub mod grem;
pub mod interp;
pub mod linalg;
pub mod models;
pub mod spin;
pub mod stats;
pub mod thermo;

pub use error::{Error, Result};
pub use models::{CovarianceModel, ModelKind};
pub use spin::{Block, CoordinatePartition, SpinConfig};
