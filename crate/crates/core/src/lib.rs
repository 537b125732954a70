//! Spectral modelling of SPDC photon-pair sources and optimisation of the
//! loss/indistinguishability figure of merit `α = η·P`.

pub mod dispersion;
pub mod error;
pub mod io;
pub mod jsa;
pub mod metrics;
pub mod optimizer;
pub mod report;
mod roots;

pub use error::{Error, Result};
