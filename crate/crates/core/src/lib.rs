//! Estimation of the intensity of randomly acquired characteristics (RACs)
//! on shoe soles.

pub mod error;
pub mod export;
pub mod grid;
mod nan_serde;
pub mod optim;
pub mod partitioning;
pub mod pixel;
pub mod region;
pub mod quadrature;
pub mod shoe_data;
pub mod simulation;
pub mod spline;
pub mod subsampling;

pub use error::{Error, Result};
pub use grid::Grid;
