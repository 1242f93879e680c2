pub mod continuum;
pub mod correlations;
pub mod error;
pub mod fano2;
pub mod fano3;
pub mod io;
pub mod linalg;
mod parallel;
pub mod physics;
pub mod sampler;
pub mod spectrum;

pub use continuum::{ContinuumGrid, Parity};
pub use error::{Error, Result};
pub use physics::{mhz, to_mhz, Constants, GaussianState, LatticeParams, PotentialModel};
