pub mod cli;
pub mod decomposition;
pub mod error;
pub mod manifold;
pub mod multiplier;
pub mod operator;
pub mod quadrature;
pub mod region;
pub mod rng;
pub mod rotation;
pub mod special;
pub mod stats;

pub use error::{Degeneracy, Error, Result};
pub use rng::RngStream;
