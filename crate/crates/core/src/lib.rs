//! Sparse vector functional autoregression: regularized FPCA, standardized
//! group lasso by block FISTA, and Granger-causality networks.

pub mod basis;
pub mod concentration;
pub mod error;
pub mod fpca;
pub mod linalg;
pub mod moments;
pub mod network;
pub mod pipeline;
pub mod quadrature;
pub mod rng;
pub mod serde_matrix;
pub mod solver;
pub mod vfar;

pub use error::{Result, VfarError};
