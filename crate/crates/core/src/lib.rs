//! Positivity analysis for semigroups generated by second-order elliptic
//! systems with matrix-valued coefficients.

pub mod assembly;
pub mod catalog;
pub mod cli;
pub mod coefficient;
pub mod config;
pub mod error;
pub mod expm;
pub mod fmt;
pub mod lab;
pub mod multop;
pub mod poly;
pub mod quadrature;
pub mod semigroup;
pub mod sparse;
pub mod tents;

pub use error::{Error, Result};

pub type C64 = num_complex::Complex64;
pub type CMat = nalgebra::DMatrix<C64>;
