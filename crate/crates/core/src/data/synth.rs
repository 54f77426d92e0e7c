use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::data::LabeledSeries;
use crate::error::{Error, Result};
use crate::numerics::{RngState, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnomalyKind {
    /// Constant offset on a few channels.
    LevelShift,
    /// Extra white noise on a few channels.
    VarianceBurst,
    /// The shared sources speed up on every channel.
    FrequencyChange,
}

/// Correlated quasi-periodic signals: a few sinusoidal sources shared by
/// all sets, mixed into the channels by a fixed random matrix, plus white
/// noise. Anomalous sets start normal and carry labelled anomaly intervals
/// after their normal prefix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub channels: usize,
    pub sets: usize,
    /// Sets without any anomaly, listed first.
    pub clean_sets: usize,
    pub length: usize,
    pub sources: usize,
    /// Fraction of each anomalous set's samples inside anomaly intervals.
    pub anomaly_rate: f64,
    pub anomaly_kinds: Vec<AnomalyKind>,
    pub interval_length: usize,
    /// White-noise standard deviation relative to each clean channel's.
    pub noise: f64,
    /// Level-shift size in clean-channel standard deviations.
    pub level_shift: f64,
    /// Burst noise standard deviation in clean-channel standard deviations.
    pub burst_scale: f64,
    pub frequency_factor: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            channels: 8,
            sets: 12,
            clean_sets: 1,
            length: 1600,
            sources: 3,
            anomaly_rate: 0.25,
            anomaly_kinds: vec![
                AnomalyKind::LevelShift,
                AnomalyKind::VarianceBurst,
                AnomalyKind::FrequencyChange,
            ],
            interval_length: 100,
            noise: 0.1,
            level_shift: 5.0,
            burst_scale: 2.0,
            frequency_factor: 2.0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.channels > 0
            && self.sets > 0
            && self.clean_sets <= self.sets
            && self.length > 0
            && self.sources > 0
            && (0.0..=0.5).contains(&self.anomaly_rate)
            && self.interval_length > 0
            && self.noise >= 0.0
            && self.level_shift.is_finite()
            && self.burst_scale >= 0.0
            && self.frequency_factor > 0.0
            && (self.anomaly_rate == 0.0 || !self.anomaly_kinds.is_empty());
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid synthetic corpus settings {self:?}")))
        }
    }
}

/// One generated set with its noise-free, anomaly-free counterpart.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthSet {
    pub series: LabeledSeries,
    pub clean: Tensor,
    /// Standard deviation of each clean channel.
    pub clean_std: Vec<f64>,
    pub intervals: Vec<(usize, usize, AnomalyKind)>,
}

struct Sources {
    freq: Vec<f64>,
    mixing: Vec<Vec<f64>>,
    offset: Vec<f64>,
}

impl Sources {
    fn value(&self, c: usize, t: f64, phase: &[f64], amp: &[f64], speed: f64) -> f64 {
        self.offset[c]
            + (0..self.freq.len())
                .map(|k| self.mixing[c][k] * amp[k] * (TAU * self.freq[k] * speed * t + phase[k]).sin())
                .sum::<f64>()
    }
}

pub fn synth_corpus(cfg: &SynthConfig, seed: u64) -> Result<Vec<SynthSet>> {
    cfg.validate()?;
    let mut root = RngState::new(seed);
    let mut shared = root.fork(0);
    let src = Sources {
        freq: (0..cfg.sources).map(|_| shared.uniform_range(1.0 / 60.0, 1.0 / 15.0)).collect(),
        mixing: (0..cfg.channels)
            .map(|_| (0..cfg.sources).map(|_| shared.normal()).collect())
            .collect(),
        offset: (0..cfg.channels).map(|_| 2.0 * shared.normal()).collect(),
    };
    (0..cfg.sets)
        .map(|i| synth_set(cfg, &src, i, &mut root.fork(1 + i as u64)))
        .collect()
}

fn synth_set(cfg: &SynthConfig, src: &Sources, index: usize, rng: &mut RngState) -> Result<SynthSet> {
    let (c, n) = (cfg.channels, cfg.length);
    let phase: Vec<f64> = (0..cfg.sources).map(|_| rng.uniform_range(0.0, TAU)).collect();
    let amp: Vec<f64> = (0..cfg.sources).map(|_| rng.uniform_range(0.8, 1.2)).collect();
    let mut clean = vec![0.0; c * n];
    for ch in 0..c {
        for t in 0..n {
            clean[ch * n + t] = src.value(ch, t as f64, &phase, &amp, 1.0);
        }
    }
    let clean_std: Vec<f64> = (0..c)
        .map(|ch| {
            let row = &clean[ch * n..(ch + 1) * n];
            let m = row.iter().sum::<f64>() / n as f64;
            (row.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n as f64).sqrt().max(1e-6)
        })
        .collect();
    let mut x: Vec<f64> = clean
        .iter()
        .enumerate()
        .map(|(k, v)| v + cfg.noise * clean_std[k / n] * rng.normal())
        .collect();
    let mut labels = vec![0u8; n];

    let mut intervals = Vec::new();
    if index >= cfg.clean_sets && cfg.anomaly_rate > 0.0 {
        let prefix = (rng.uniform_range(0.35, 0.5) * n as f64) as usize;
        let total = ((cfg.anomaly_rate * n as f64).round() as usize).min(n - prefix);
        let m = (total as f64 / cfg.interval_length as f64).round().max(1.0) as usize;
        let slack = n - prefix - total;
        let weights: Vec<f64> = (0..=m).map(|_| rng.uniform() + 0.1).collect();
        let wsum: f64 = weights.iter().sum();
        let mut start = prefix;
        for j in 0..m {
            start += (slack as f64 * weights[j] / wsum).floor() as usize;
            let len = if j + 1 == m { total - (total / m) * (m - 1) } else { total / m };
            let kind = cfg.anomaly_kinds[rng.below(cfg.anomaly_kinds.len())];
            let end = (start + len).min(n);
            inject(cfg, src, kind, start, end, &phase, &amp, &clean_std, &mut x, rng);
            labels[start..end].iter_mut().for_each(|l| *l = 1);
            intervals.push((start, end, kind));
            start = end;
        }
    }

    let id = format!("synth_{index:02}");
    let series = LabeledSeries::new(
        id,
        (0..c).map(|ch| format!("ch{ch}")).collect(),
        Tensor::new(vec![c, n], x)?,
        (0..n).map(|t| t.to_string()).collect(),
        labels,
    )?;
    Ok(SynthSet {
        series,
        clean: Tensor::new(vec![c, n], clean)?,
        clean_std,
        intervals,
    })
}

#[allow(clippy::too_many_arguments)]
fn inject(
    cfg: &SynthConfig,
    src: &Sources,
    kind: AnomalyKind,
    start: usize,
    end: usize,
    phase: &[f64],
    amp: &[f64],
    std: &[f64],
    x: &mut [f64],
    rng: &mut RngState,
) {
    let (c, n) = (cfg.channels, cfg.length);
    let mut affected: Vec<usize> = (0..c).collect();
    rng.shuffle(&mut affected);
    affected.truncate(1 + rng.below(c.div_ceil(2)));
    match kind {
        AnomalyKind::LevelShift => {
            for &ch in &affected {
                let sign = if rng.uniform() < 0.5 { -1.0 } else { 1.0 };
                for t in start..end {
                    x[ch * n + t] += sign * cfg.level_shift * std[ch];
                }
            }
        }
        AnomalyKind::VarianceBurst => {
            for &ch in &affected {
                for t in start..end {
                    x[ch * n + t] += cfg.burst_scale * std[ch] * rng.normal();
                }
            }
        }
        AnomalyKind::FrequencyChange => {
            for ch in 0..c {
                for t in start..end {
                    let base = src.value(ch, t as f64, phase, amp, 1.0);
                    x[ch * n + t] += src.value(ch, t as f64, phase, amp, cfg.frequency_factor) - base;
                }
            }
        }
    }
}
