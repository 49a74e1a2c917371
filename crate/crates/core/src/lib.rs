pub mod error;
pub mod geometry;
pub mod identities;
pub mod pfunction;
pub mod quadrature;
pub mod solver;
pub mod stability;
pub mod symfun;

pub use error::{Error, Result};
