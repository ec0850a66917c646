//! Experiment runner for the hypercircle estimator library: configuration parsing, CSV
//! tables and the self-check suite.

pub mod check;
pub mod config;
pub mod runner;
pub mod table;
