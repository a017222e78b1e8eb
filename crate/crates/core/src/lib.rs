//! Weighted lowest-order Raviart–Thomas mixed finite elements for degenerate
//! elliptic problems `-div(a ∇u) = g`, applied to the fractional Laplacian
//! through its truncated cylinder extension on graded meshes.

pub mod error;
pub mod femcore;
pub mod fraclap;
pub mod linalg;
pub mod mesh;
pub mod quadrature;
pub mod specfun;
pub mod study;
pub mod system;
pub mod weight;

pub use error::{Error, Result};
