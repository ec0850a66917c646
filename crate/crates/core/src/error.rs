use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("conjugate gradients did not converge after {iterations} iterations (relative residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },
    #[error("local residual is not equilibrated on the patch of vertex {vertex}: r(1) = {value:e}")]
    NotEquilibrated { vertex: usize, value: f64 },
    #[error("constraint operator has unexpected rank deficiency {nullity} (allowed {allowed})")]
    RankDeficient { nullity: usize, allowed: usize },
    #[error("point ({0}, {1}) lies outside the mesh")]
    PointOutside(f64, f64),
    #[error("incompatible data: {0}")]
    Incompatible(String),
    #[error("zero denominator in {0}")]
    ZeroDenominator(&'static str),
    #[error("reference cache: {0}")]
    Cache(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
