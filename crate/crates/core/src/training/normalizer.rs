use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Result};
use crate::numerics::Tensor;

pub const DEFAULT_DECAY: f64 = 0.99;
pub const SIGMA_FLOOR: f64 = 1e-6;

/// Running per-channel residual scale and its reciprocal `ω`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelNormalizer {
    pub decay: f64,
    /// `None` until the first batch, which initializes the estimate directly.
    pub sigma: Option<Vec<f64>>,
    channels: usize,
}

impl ChannelNormalizer {
    pub fn new(channels: usize, decay: f64) -> Self {
        ChannelNormalizer {
            decay,
            sigma: None,
            channels,
        }
    }

    pub fn omega(&self) -> Vec<f64> {
        match &self.sigma {
            Some(s) => s.iter().map(|v| 1.0 / v.max(SIGMA_FLOOR)).collect(),
            None => vec![1.0; self.channels],
        }
    }

    /// Folds in one batch of `C × T` residuals `x − x̂`.
    pub fn update(&mut self, residuals: &[Tensor]) -> Result<Vec<f64>> {
        let c = self.channels;
        let mut sum = vec![0.0; c];
        let mut sq = vec![0.0; c];
        let mut n = 0usize;
        for r in residuals {
            if r.rank() != 2 || r.shape()[0] != c {
                return dim_err(format!("residual shape {:?} for {c} channels", r.shape()));
            }
            for ch in 0..c {
                for &v in r.row(ch) {
                    sum[ch] += v;
                    sq[ch] += v * v;
                }
            }
            n += r.shape()[1];
        }
        if n == 0 {
            return Ok(self.omega());
        }
        let batch_std: Vec<f64> = (0..c)
            .map(|ch| {
                let mean = sum[ch] / n as f64;
                (sq[ch] / n as f64 - mean * mean).max(0.0).sqrt()
            })
            .collect();
        self.sigma = Some(match self.sigma.take() {
            None => batch_std,
            Some(s) => s
                .iter()
                .zip(&batch_std)
                .map(|(a, b)| self.decay * a + (1.0 - self.decay) * b)
                .collect(),
        });
        Ok(self.omega())
    }
}
