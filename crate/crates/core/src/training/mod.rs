//! Rate-distortion and plain-autoencoder training.

mod fit;
mod loss;
mod normalizer;
mod report;

pub use fit::{build_coding_tables, evaluate, fit, TrainConfig};
pub use loss::{ae_loss, mse, rdo_loss, rdo_loss_var, LossVars, LossWeights};
pub use normalizer::{ChannelNormalizer, DEFAULT_DECAY, SIGMA_FLOOR};
pub use report::{EpochStats, TrainReport};
