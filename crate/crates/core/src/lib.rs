//! Numerical laboratory for stochastic porous-medium equations on the torus.

pub mod config;
pub mod entropy;
pub mod error;
pub mod experiment;
pub mod expr;
pub mod grid;
pub mod mollifier;
pub mod noise;
pub mod nonlinearity;
pub mod quadrature;
pub mod report;
pub mod solver;
pub mod verification;

pub use error::{Error, Result};
