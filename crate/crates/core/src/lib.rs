//! Sign-language topic detection toolkit.

pub mod complexity;
pub mod config;
pub mod error;
pub mod models;
pub mod nnkernel;
pub mod posefeat;
pub mod scalar;
pub mod synthgen;
pub mod tensorio;
pub mod tokenizer;
pub mod training;

pub use error::{Error, ErrorCategory, Result};
pub use scalar::Scalar;
pub use tensorio::Matrix;

pub type Matrix32 = Matrix<f32>;
pub type Matrix64 = Matrix<f64>;
