//! Single-photon superradiance and subradiance in N-atom ensembles.

pub mod dicke;
pub mod ensemble;
pub mod error;
pub mod kernel;
pub mod prep;
pub mod scenario;
pub mod states;
pub mod ww;

pub use error::{Error, Result};
