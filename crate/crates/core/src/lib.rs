//! Finite-resolution machinery for 1-rectifiable doubling measures: net
//! hierarchies, metric dyadic cubes, lower densities, porous-cube packing,
//! bridge curves and their Lipschitz parametrization.

pub mod cubes;
pub mod curve;
pub mod density;
pub mod error;
pub mod generators;
pub mod io;
pub mod nets;
mod par;
pub mod pipeline;
pub mod porosity;
pub mod space;

pub use error::{Error, Result};
