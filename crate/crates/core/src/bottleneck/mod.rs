//! Entropy bottleneck: factorized latent density, quantization, rate
//! estimation and an actual range coder for the quantized latent.

pub mod bitstream;
mod density;
mod quantize;
pub mod range_coder;

pub use bitstream::{compress, decompress, Bitstream, CodingTables, PmfTable};
pub use density::{DensityVars, FactorizedDensity, DEFAULT_FILTERS, DEFAULT_LIKELIHOOD_FLOOR};
pub use quantize::{quantize, to_symbols, uniform_noise, QuantizerMode};
