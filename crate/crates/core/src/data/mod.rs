//! Labelled series ingestion, normalisation, windowing, training-corpus
//! assembly and a synthetic benchmark generator.

mod corpus;
mod normalize;
mod series;
mod synth;
mod window;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use corpus::{build_training_corpus, choose_validation, CorpusManifest, TrainingCorpus, MAX_ANOMALY_FRACTION};
pub use normalize::{NormStats, STD_FLOOR};
pub use series::{load_series, write_series, LabeledSeries, LoadOptions};
pub use synth::{synth_corpus, AnomalyKind, SynthConfig, SynthSet};
pub use window::{window, window_offsets, WindowBatch};

/// Delimited files on disk, one set per file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileSource {
    pub paths: Vec<PathBuf>,
    #[serde(default)]
    pub load: LoadOptions,
}

/// Where the sets come from and how they are split. Exactly one of `synth`
/// and `files` must be set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    pub synth: Option<SynthConfig>,
    pub synth_seed: u64,
    pub files: Option<FileSource>,
    pub validation_sets: usize,
    pub anomaly_fraction: f64,
    pub split_seed: u64,
    pub train_stride: usize,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            synth: Some(SynthConfig::default()),
            synth_seed: 0,
            files: None,
            validation_sets: 5,
            anomaly_fraction: 0.05,
            split_seed: 0,
            train_stride: 10,
        }
    }
}

impl DataConfig {
    pub fn validate(&self) -> Result<()> {
        match (&self.synth, &self.files) {
            (Some(s), None) => s.validate()?,
            (None, Some(f)) if !f.paths.is_empty() => {}
            _ => return Err(Error::Config("data needs exactly one of 'synth' or a non-empty 'files'".into())),
        }
        if !(0.0..=MAX_ANOMALY_FRACTION).contains(&self.anomaly_fraction) {
            return Err(Error::Config(format!(
                "data.anomaly_fraction must lie in [0, {MAX_ANOMALY_FRACTION}]"
            )));
        }
        if self.validation_sets == 0 || self.train_stride == 0 {
            return Err(Error::Config("data.validation_sets and data.train_stride must be >= 1".into()));
        }
        Ok(())
    }

    /// Raw sets in a stable order.
    pub fn load_sets(&self) -> Result<Vec<LabeledSeries>> {
        if let Some(s) = &self.synth {
            return Ok(synth_corpus(s, self.synth_seed)?.into_iter().map(|s| s.series).collect());
        }
        let f = self.files.as_ref().ok_or_else(|| Error::Config("no data source".into()))?;
        let sets: Vec<LabeledSeries> = f.paths.iter().map(|p| load_series(p, &f.load)).collect::<Result<_>>()?;
        let c = sets[0].num_channels();
        if let Some(s) = sets.iter().find(|s| s.num_channels() != c) {
            return Err(Error::Contract(format!("set {} has {} channels, expected {c}", s.id, s.num_channels())));
        }
        Ok(sets)
    }
}

/// Normalised training corpus and validation sets for one experiment.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub corpus: TrainingCorpus,
    pub validation: Vec<LabeledSeries>,
    pub manifest: CorpusManifest,
}

/// Splits `sets`, fits normalisation on the training sets only and builds
/// the training corpus.
pub fn prepare(sets: &[LabeledSeries], cfg: &DataConfig, window_length: usize, seed: u64) -> Result<PreparedData> {
    let val_idx = choose_validation(sets, cfg.validation_sets, cfg.split_seed)?;
    let (val, train): (Vec<&LabeledSeries>, Vec<&LabeledSeries>) =
        sets.iter().enumerate().fold((vec![], vec![]), |(mut v, mut t), (i, s)| {
            if val_idx.contains(&i) {
                v.push(s);
            } else {
                t.push(s);
            }
            (v, t)
        });
    if train.is_empty() {
        return Err(Error::Contract("every set went to validation; nothing left to train on".into()));
    }
    let stats = NormStats::fit(&train)?;
    let train_norm: Vec<LabeledSeries> = train.iter().map(|s| stats.apply_series(s)).collect::<Result<_>>()?;
    let validation: Vec<LabeledSeries> = val.iter().map(|s| stats.apply_series(s)).collect::<Result<_>>()?;
    let refs: Vec<&LabeledSeries> = train_norm.iter().collect();
    let corpus = build_training_corpus(&refs, window_length, cfg.train_stride, cfg.anomaly_fraction, seed)?;
    let manifest = CorpusManifest {
        train_sets: train.iter().map(|s| s.id.clone()).collect(),
        validation_sets: val.iter().map(|s| s.id.clone()).collect(),
        anomaly_fraction: cfg.anomaly_fraction,
        achieved_fraction: corpus.anomalous_fraction(),
        split_seed: cfg.split_seed,
        window_length,
        train_stride: cfg.train_stride,
        normal_windows: corpus.normal_windows,
        anomalous_windows: corpus.anomalous_windows,
        normalization: stats,
    };
    Ok(PreparedData {
        corpus,
        validation,
        manifest,
    })
}
