use log::warn;
use serde::{Deserialize, Serialize};

use crate::data::LabeledSeries;
use crate::error::{dim_err, Error, Result};
use crate::numerics::Tensor;

pub const STD_FLOOR: f64 = 1e-8;

/// Per-channel mean and standard deviation used for z-scoring.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl NormStats {
    /// Population statistics over every sample of `sets`. Channels whose
    /// standard deviation falls below [`STD_FLOOR`] are floored with a warning.
    pub fn fit(sets: &[&LabeledSeries]) -> Result<Self> {
        let first = sets.first().ok_or_else(|| Error::Contract("no series to normalise".into()))?;
        let c = first.num_channels();
        let mut n = 0usize;
        let mut sum = vec![0.0; c];
        for s in sets {
            if s.num_channels() != c {
                return dim_err(format!("set {} has {} channels, expected {c}", s.id, s.num_channels()));
            }
            for (ch, acc) in sum.iter_mut().enumerate() {
                *acc += s.channels.row(ch).iter().sum::<f64>();
            }
            n += s.len();
        }
        if n == 0 {
            return Err(Error::Contract("series are empty".into()));
        }
        let mean: Vec<f64> = sum.iter().map(|v| v / n as f64).collect();
        let mut sq = vec![0.0; c];
        for s in sets {
            for (ch, acc) in sq.iter_mut().enumerate() {
                *acc += s.channels.row(ch).iter().map(|v| (v - mean[ch]).powi(2)).sum::<f64>();
            }
        }
        let std = sq
            .iter()
            .enumerate()
            .map(|(ch, v)| {
                let s = (v / n as f64).sqrt();
                if s < STD_FLOOR {
                    warn!("channel {ch} is constant; its standard deviation is floored at {STD_FLOOR}");
                    STD_FLOOR
                } else {
                    s
                }
            })
            .collect();
        Ok(NormStats { mean, std })
    }

    pub fn apply(&self, channels: &Tensor) -> Result<Tensor> {
        let c = self.mean.len();
        if channels.rank() != 2 || channels.shape()[0] != c {
            return dim_err(format!("cannot normalise {:?} with {c}-channel statistics", channels.shape()));
        }
        let n = channels.shape()[1];
        let data = channels
            .data()
            .iter()
            .enumerate()
            .map(|(k, v)| (v - self.mean[k / n]) / self.std[k / n])
            .collect();
        Tensor::new(vec![c, n], data)
    }

    pub fn apply_series(&self, s: &LabeledSeries) -> Result<LabeledSeries> {
        Ok(LabeledSeries {
            channels: self.apply(&s.channels)?,
            ..s.clone()
        })
    }
}
