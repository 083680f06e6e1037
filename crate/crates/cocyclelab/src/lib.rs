//! Numerical toolkit for quasi-periodic SO(3) cocycles.

pub mod algebra3;
pub mod cli;
pub mod arithmetic;
pub mod cocycle;
pub mod error;
pub mod fourier;
pub mod kam;
pub mod normalform;
pub mod renorm;

pub use error::{Error, Result};
