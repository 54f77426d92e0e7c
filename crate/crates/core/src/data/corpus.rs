use serde::{Deserialize, Serialize};

use crate::data::normalize::NormStats;
use crate::data::window::{window, window_offsets, WindowBatch};
use crate::data::LabeledSeries;
use crate::error::{Error, Result};
use crate::numerics::RngState;

pub const MAX_ANOMALY_FRACTION: f64 = 0.25;

/// Picks `count` validation sets among those with at least one anomaly.
pub fn choose_validation(sets: &[LabeledSeries], count: usize, seed: u64) -> Result<Vec<usize>> {
    let mut candidates: Vec<usize> = (0..sets.len()).filter(|&i| sets[i].has_anomalies()).collect();
    if candidates.len() < count {
        return Err(Error::Contract(format!(
            "{count} validation sets requested but only {} sets contain anomalies",
            candidates.len()
        )));
    }
    RngState::new(seed).fork(0x7661_6c69).shuffle(&mut candidates);
    let mut chosen = candidates[..count].to_vec();
    chosen.sort_unstable();
    Ok(chosen)
}

/// Unlabelled training windows with a known share of anomalous origin.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingCorpus {
    pub batch: WindowBatch,
    pub normal_windows: usize,
    pub anomalous_windows: usize,
}

impl TrainingCorpus {
    pub fn anomalous_fraction(&self) -> f64 {
        self.anomalous_windows as f64 / self.batch.len().max(1) as f64
    }
}

/// Normal-prefix windows of every set plus `round(p·n/(1−p))` windows that
/// overlap an anomaly, drawn without replacement until the pool runs out and
/// with replacement after that. The final order is shuffled.
pub fn build_training_corpus(
    sets: &[&LabeledSeries],
    window_length: usize,
    stride: usize,
    p: f64,
    seed: u64,
) -> Result<TrainingCorpus> {
    if !(0.0..=MAX_ANOMALY_FRACTION).contains(&p) {
        return Err(Error::Config(format!("anomaly fraction {p} outside [0, {MAX_ANOMALY_FRACTION}]")));
    }
    let mut normal = WindowBatch::default();
    let mut pool: Vec<(usize, usize)> = Vec::new();
    for (si, s) in sets.iter().enumerate() {
        let prefix = s.normal_prefix_len();
        if prefix >= window_length {
            let b = window(&s.channels.columns(0, prefix)?, &s.id, window_length, stride)?;
            normal.windows.extend(b.windows);
            normal.sources.extend(b.sources);
        }
        if s.len() >= window_length {
            for off in window_offsets(s.len(), window_length, stride)? {
                if s.labels[off..off + window_length].contains(&1) {
                    pool.push((si, off));
                }
            }
        }
    }
    let n = normal.len();
    if n == 0 {
        return Err(Error::Contract("no normal-prefix window fits in the training sets".into()));
    }
    let k = (p * n as f64 / (1.0 - p)).round() as usize;
    if k > 0 && pool.is_empty() {
        return Err(Error::Contract("anomalous windows requested but the training sets have none".into()));
    }

    let mut rng = RngState::new(seed);
    let mut draw_rng = rng.fork(1);
    let mut order_rng = rng.fork(2);
    draw_rng.shuffle(&mut pool);
    let mut picks: Vec<(usize, usize)> = pool.iter().copied().take(k).collect();
    while picks.len() < k {
        picks.push(pool[draw_rng.below(pool.len())]);
    }

    let mut all = normal;
    for (si, off) in picks {
        let s = sets[si];
        all.push(s.channels.columns(off, window_length)?, &s.id, off);
    }
    let mut order: Vec<usize> = (0..all.len()).collect();
    order_rng.shuffle(&mut order);
    let batch = WindowBatch {
        windows: order.iter().map(|&i| all.windows[i].clone()).collect(),
        sources: order.iter().map(|&i| all.sources[i].clone()).collect(),
    };
    Ok(TrainingCorpus {
        batch,
        normal_windows: n,
        anomalous_windows: k,
    })
}

/// What went into a training corpus; written next to the checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub train_sets: Vec<String>,
    pub validation_sets: Vec<String>,
    pub anomaly_fraction: f64,
    pub achieved_fraction: f64,
    pub split_seed: u64,
    pub window_length: usize,
    pub train_stride: usize,
    pub normal_windows: usize,
    pub anomalous_windows: usize,
    pub normalization: NormStats,
}
