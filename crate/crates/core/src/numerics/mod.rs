//! Deterministic `f64` tensor engine: forward kernels, a reverse-mode tape,
//! named parameter storage, Adam and a seeded random stream.

mod adam;
mod graph;
pub mod ops;
mod params;
mod rng;
mod tensor;

pub use adam::{AdamConfig, AdamState};
pub use graph::{Graph, Var};
pub use params::{Gradients, ParamId, ParamStore, Parameter};
pub use rng::RngState;
pub use tensor::Tensor;
