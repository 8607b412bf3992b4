pub mod cli;
pub mod config;
pub mod error;
pub mod fftconv;
pub mod io;
pub mod kernels;
pub mod linalg;
pub mod memory;
pub mod operators;
pub mod quadrature;
pub mod solver;
pub mod special;
pub mod stochastic;
pub mod verify;

pub use error::{Error, Result};
