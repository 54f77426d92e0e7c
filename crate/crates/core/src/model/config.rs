use serde::{Deserialize, Serialize};

use crate::bottleneck::{DEFAULT_FILTERS, DEFAULT_LIKELIHOOD_FLOOR};
use crate::error::{Error, Result};

/// Architecture of the temporal convolutional autoencoder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TcnConfig {
    pub input_channels: usize,
    pub window_length: usize,
    pub blocks: usize,
    pub layers_per_block: usize,
    pub channel_width: usize,
    pub kernel_width: usize,
    pub latent_dim: usize,
    /// `false` trains the plain autoencoder baseline: no quantization, no
    /// density, latent fed straight to the decoder.
    pub bottleneck_enabled: bool,
    pub density_filters: Vec<usize>,
    pub likelihood_floor: f64,
}

impl Default for TcnConfig {
    fn default() -> Self {
        TcnConfig {
            input_channels: 8,
            window_length: 200,
            blocks: 8,
            layers_per_block: 2,
            channel_width: 128,
            kernel_width: 3,
            latent_dim: 64,
            bottleneck_enabled: true,
            density_filters: DEFAULT_FILTERS.to_vec(),
            likelihood_floor: DEFAULT_LIKELIHOOD_FLOOR,
        }
    }
}

impl TcnConfig {
    /// Dilation of encoder block `l` (and of its decoder mirror).
    pub fn dilation(&self, block: usize) -> usize {
        1 << block
    }

    pub fn dilations(&self) -> Vec<usize> {
        (0..self.blocks).map(|l| self.dilation(l)).collect()
    }

    /// Number of past samples (including the current one) that can reach
    /// one output of the encoder convolution stack.
    pub fn receptive_field(&self) -> usize {
        1 + self
            .dilations()
            .iter()
            .map(|d| self.layers_per_block * (self.kernel_width - 1) * d)
            .sum::<usize>()
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("input_channels", self.input_channels),
            ("window_length", self.window_length),
            ("blocks", self.blocks),
            ("layers_per_block", self.layers_per_block),
            ("channel_width", self.channel_width),
            ("kernel_width", self.kernel_width),
            ("latent_dim", self.latent_dim),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("model.{name} must be >= 1")));
        }
        if self.blocks > 16 {
            return Err(Error::Config("model.blocks must be <= 16".into()));
        }
        if self.latent_dim >= self.input_channels * self.window_length {
            return Err(Error::Config(format!(
                "model.latent_dim {} must be smaller than channels x window = {}",
                self.latent_dim,
                self.input_channels * self.window_length
            )));
        }
        if self.density_filters.is_empty() || self.density_filters.contains(&0) {
            return Err(Error::Config("model.density_filters must be non-empty and positive".into()));
        }
        if !(self.likelihood_floor > 0.0 && self.likelihood_floor < 1.0) {
            return Err(Error::Config("model.likelihood_floor must lie in (0, 1)".into()));
        }
        Ok(())
    }
}
