//! Numerics for diagonal SDEs driven by anisotropic symmetric stable noise.

pub mod error;
pub mod field;
pub mod grid;
pub mod harness;
pub mod levy;
pub mod nonlocal;
pub mod quad;
pub mod rng;
pub mod sde;
pub mod spectral;
pub mod stable;
pub mod stats;
pub mod testfn;

pub use error::{Error, Result};
