pub mod asymptotics;
pub mod cli;
pub mod error;
pub mod integrate;
pub mod mp;
pub mod predict;
pub mod spectra;

pub use error::{Error, Result};
