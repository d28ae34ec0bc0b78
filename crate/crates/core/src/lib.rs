pub mod basis;
pub mod domain;
pub mod error;
pub mod experiment;
pub mod export;
pub mod fbp;
pub mod field;
pub mod forward;
pub mod operators;
pub mod phantom;
pub mod quadrature;
pub mod recon;
pub mod solver;
pub mod spline;
pub mod theory;

pub use error::{Error, Result};
