pub mod bottleneck;
pub mod cli;
pub mod config;
pub mod data;
pub mod detection;
pub mod error;
pub mod model;
pub mod numerics;
pub mod training;

pub use error::{Error, Result};
