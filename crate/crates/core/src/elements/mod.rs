//! Reference-element machinery on the unit square `[0, 1]^2`.

pub mod lagrange;
pub mod poly;
pub mod quadrature;
pub mod rt;

pub use lagrange::LagrangeElement;
pub use quadrature::{GaussRule1d, QuadratureRule};
pub use rt::RtElement;
