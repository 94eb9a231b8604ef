//! Heavy-tailed random matrix laboratory.
//!
//! Builds deformed Lévy matrices and their Gaussian comparison ensembles,
//! solves the limiting and free-convolution fixed points, and runs the
//! universality experiments (least singular value, delocalization, local
//! laws, gap probabilities).

pub mod ensemble;
pub mod experiment;
pub mod freeconv;
pub mod limit;
pub mod error;
pub mod numerics;
pub mod rng;
pub mod spectral;
pub mod stable;
pub mod stats;

pub use error::{LabError, Result};
