//! Learning classification losses that hold up under label noise: a
//! Taylor-polynomial loss family searched with CMA-ES, the reference
//! losses it is compared against, and the small training stack both run on.

pub mod bench;
pub mod cmaes;
pub mod data;
pub mod error;
pub mod loss;
pub mod meta;
pub mod nn;
pub mod noise;
pub mod reference;
pub mod rng;
pub mod taylor;

pub use error::{Error, Result};
