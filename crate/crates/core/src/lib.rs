//! Simulation and security analysis of a mediated semi-quantum key
//! distribution protocol.

pub mod channels;
pub mod cli;
pub mod error;
pub mod fmt;
pub mod keyrate;
pub mod postprocess;
pub mod protocol;
pub mod quantum;

pub use error::{Error, Result};
