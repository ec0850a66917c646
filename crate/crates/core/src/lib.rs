//! Adaptive finite element laboratory for the Poisson problem on quadrilateral meshes
//! with one-level hanging nodes, with equilibrated and goal-oriented error estimation by
//! localized Raviart–Thomas flux reconstruction.

pub mod adapt;
pub mod cases;
pub mod elements;
pub mod error;
pub mod estimate;
pub mod flux;
pub mod galerkin;
pub mod linalg;
pub mod mesh;
pub mod space;

pub use error::{Error, Result};
