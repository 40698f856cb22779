pub mod cli;
pub mod config;
pub mod encoders;
pub mod error;
pub mod gradsuite;
pub mod hypernet;
pub mod inversion;
pub mod losses;
pub(crate) mod nn;
pub mod rng;
pub mod synthgen;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
