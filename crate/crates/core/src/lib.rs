//! Numerical laboratory for Dirichlet-to-Neumann maps of the conductivity
//! equation on prefractal planar domains.

pub mod conductivity;
pub mod config;
pub mod error;
pub mod expr;
pub mod fem;
pub mod fit;
pub mod geometry;
pub mod harness;
pub mod inverse;
pub mod mesh;
pub mod report;
pub mod schrodinger;
pub mod trace;

pub use error::{Error, Result};
