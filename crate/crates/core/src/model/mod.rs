//! Temporal convolutional autoencoder and its on-disk checkpoint format.

mod autoencoder;
pub mod checkpoint;
mod config;

pub use autoencoder::{TcnAutoencoder, TrainOutputs};
pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use config::TcnConfig;
