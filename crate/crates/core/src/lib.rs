//! Second-order identification of homogeneous Gaussian random fields on 2D grids.
//!
//! The pipeline runs grid data through an averaged modified periodogram,
//! fits parametric PSD models by damped least squares and checks the fitted
//! structure by re-simulating fields with the identified covariance. A
//! Voronoi-aggregate module produces surrogate stress fields for desk-scale
//! experiments.
//!
//! Grid values are row-major with Y as the slow index throughout the crate.

pub mod diagnostics;
pub mod error;
pub mod fitting;
pub mod grid;
pub mod microstructure;
pub mod models;
pub mod rng;
pub mod spectral;
pub mod synthesis;
pub mod window;

pub use error::{Error, Result};
pub use grid::{Ensemble, GridField, GridSpec, ScatteredField, ScatteredPoint};
pub use models::{Component, Family, PsdModel};
pub use spectral::Periodogram;
pub use window::WindowKind;
