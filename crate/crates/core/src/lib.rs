pub mod cli;
pub mod control;
pub mod dynamics;
pub mod error;
pub mod functionals;
pub mod kernels;
pub mod measures;
pub mod scenario;
pub mod wasserstein;

pub use error::{Error, Result};
