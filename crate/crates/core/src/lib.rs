//! Identity-unlearnable perturbations for multichannel EEG-style datasets.

pub mod cli;
pub mod data;
mod error;
pub mod eval;
pub mod nets;
pub mod numerics;
pub mod seed;
pub mod shield;

pub use error::{Error, Result};
