use std::fs;
use std::path::Path;

use log::{info, warn};
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::data::{prepare, CorpusManifest, LabeledSeries, PreparedData};
use crate::detection::{evaluate_multi_shot, evaluate_one_shot, score_rows, score_set, Counts, SetBreakdown, SetScores};
use crate::error::{Error, Result};
use crate::model::{load_checkpoint, save_checkpoint, TcnAutoencoder};
use crate::numerics::RngState;
use crate::training::{fit, TrainReport};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const REPORT_FILE: &str = "train_report.csv";
pub const METRICS_FILE: &str = "metrics.json";
pub const SCORES_FILE: &str = "scores.csv";

/// Stream tag separating weight initialisation from the other seeded draws.
const INIT_STREAM: u64 = 0x696e_6974;

/// Everything about a training run that is not in the model checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub config_sha256: String,
    pub experiment: ExperimentConfig,
    pub corpus: CorpusManifest,
    pub best_epoch: Option<usize>,
}

pub struct Trained {
    pub model: TcnAutoencoder,
    pub report: TrainReport,
    pub data: PreparedData,
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub(crate) fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    serde_path_to_error::deserialize(de).map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))
}

fn load_and_prepare(cfg: &ExperimentConfig) -> Result<PreparedData> {
    let sets = cfg.data.load_sets()?;
    if let Some(s) = sets.iter().find(|s| s.num_channels() != cfg.model.input_channels) {
        return Err(Error::Contract(format!(
            "set {} has {} channels but the model expects {}",
            s.id,
            s.num_channels(),
            cfg.model.input_channels
        )));
    }
    prepare(&sets, &cfg.data, cfg.model.window_length, cfg.training.seed)
}

/// Builds the corpus, initialises the model from the training seed and fits
/// it. On a non-finite abort the partial report comes back inside `Err`.
pub fn train_model(cfg: &ExperimentConfig) -> std::result::Result<Trained, (Error, TrainReport)> {
    let data = load_and_prepare(cfg).map_err(|e| (e, TrainReport::default()))?;
    let mut init = RngState::new(cfg.training.seed).fork(INIT_STREAM);
    let model = TcnAutoencoder::new(cfg.model.clone(), &mut init).map_err(|e| (e, TrainReport::default()))?;
    info!(
        "training {} model on {} windows ({} anomalous)",
        cfg.model_type(),
        data.corpus.batch.len(),
        data.corpus.anomalous_windows
    );
    let mut report = TrainReport::default();
    match fit(model, &data.corpus.batch.windows, &cfg.training, &mut report) {
        Ok(model) => Ok(Trained { model, report, data }),
        Err(e) => Err((e, report)),
    }
}

/// `train`: writes the checkpoint, `manifest.json` and `train_report.csv`
/// into `out`.
pub fn train_experiment(cfg: &ExperimentConfig, out: &Path) -> Result<Trained> {
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let hash = cfg.sha256();
    let trained = match train_model(cfg) {
        Ok(t) => t,
        Err((e, report)) => {
            if !report.epochs.is_empty() {
                report.save_csv(&out.join(REPORT_FILE), Some(&hash))?;
            }
            return Err(e);
        }
    };
    save_checkpoint(&trained.model, out)?;
    let manifest = RunManifest {
        config_sha256: hash.clone(),
        experiment: cfg.clone(),
        corpus: trained.data.manifest.clone(),
        best_epoch: trained.report.best_epoch,
    };
    write_json(&out.join(MANIFEST_FILE), &manifest)?;
    trained.report.save_csv(&out.join(REPORT_FILE), Some(&hash))?;
    Ok(trained)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiShotSummary {
    pub cs_limit: f64,
    pub best_f1: f64,
    pub best_delta: f64,
    pub counts: Counts,
    pub per_set: Vec<SetBreakdown>,
}

/// Evaluation summary laid out like one results-table row plus details.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub config_sha256: String,
    pub model_type: String,
    pub anomaly_pct: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub channel_width: usize,
    pub seed: u64,
    pub best_f1: f64,
    pub best_delta: f64,
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub per_set: Vec<SetBreakdown>,
    pub multi_shot: Option<MultiShotSummary>,
    pub train_report: String,
}

/// Scores every validation set and sweeps δ over the configured grid.
pub fn evaluate_model(
    model: &TcnAutoencoder,
    cfg: &ExperimentConfig,
    validation: &[LabeledSeries],
    multi_shot: bool,
) -> Result<(MetricsReport, Vec<SetScores>)> {
    if validation.is_empty() {
        return Err(Error::Contract("no validation sets to evaluate".into()));
    }
    if let Some(s) = validation.iter().find(|s| !s.has_anomalies()) {
        warn!("validation set {} has no anomaly labels", s.id);
    }
    let scores: Vec<SetScores> = validation
        .iter()
        .map(|s| score_set(model, &s.id, &s.channels, &s.labels, multi_shot))
        .collect::<Result<_>>()?;
    let deltas = cfg.detection.delta_grid.values();
    let one = evaluate_one_shot(&scores, &deltas)?;
    let multi = if multi_shot {
        let m = evaluate_multi_shot(&scores, &deltas, cfg.detection.cs_limit)?;
        Some(MultiShotSummary {
            cs_limit: cfg.detection.cs_limit,
            best_f1: m.sweep.best_f1,
            best_delta: m.sweep.best_delta,
            counts: m.sweep.counts,
            per_set: m.per_set,
        })
    } else {
        None
    };
    let report = MetricsReport {
        config_sha256: cfg.sha256(),
        model_type: cfg.model_type().to_string(),
        anomaly_pct: 100.0 * cfg.data.anomaly_fraction,
        lambda1: cfg.training.lambda1,
        lambda2: cfg.training.lambda2,
        channel_width: cfg.model.channel_width,
        seed: cfg.training.seed,
        best_f1: one.sweep.best_f1,
        best_delta: one.sweep.best_delta,
        tp: one.sweep.counts.tp,
        fp: one.sweep.counts.fp,
        fn_: one.sweep.counts.fn_,
        per_set: one.per_set,
        multi_shot: multi,
        train_report: REPORT_FILE.to_string(),
    };
    Ok((report, scores))
}

/// Reloads and normalises the validation sets recorded in a run manifest.
pub fn validation_sets(manifest: &RunManifest) -> Result<Vec<LabeledSeries>> {
    let sets = manifest.experiment.data.load_sets()?;
    manifest
        .corpus
        .validation_sets
        .iter()
        .map(|id| {
            let s = sets
                .iter()
                .find(|s| &s.id == id)
                .ok_or_else(|| Error::Contract(format!("validation set {id} is no longer available")))?;
            manifest.corpus.normalization.apply_series(s)
        })
        .collect()
}

pub fn load_run(checkpoint: &Path) -> Result<(TcnAutoencoder, RunManifest)> {
    let model = load_checkpoint(checkpoint)?;
    let manifest: RunManifest = read_json(&checkpoint.join(MANIFEST_FILE))?;
    if model.config() != &manifest.experiment.model {
        return Err(Error::Checkpoint("model.json and manifest.json disagree on the architecture".into()));
    }
    Ok((model, manifest))
}

/// `eval`: writes `metrics.json` and a per-sample `scores.csv` into `out`.
pub fn eval_checkpoint(checkpoint: &Path, multi_shot: bool, out: &Path) -> Result<MetricsReport> {
    let (model, manifest) = load_run(checkpoint)?;
    let validation = validation_sets(&manifest)?;
    let cfg = &manifest.experiment;
    let (report, scores) = evaluate_model(&model, cfg, &validation, multi_shot)?;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    write_json(&out.join(METRICS_FILE), &report)?;
    let path = out.join(SCORES_FILE);
    let mut file = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
    use std::io::Write;
    writeln!(file, "# config_sha256={}", report.config_sha256).map_err(|e| Error::io(&path, e))?;
    let mut w = csv::Writer::from_writer(file);
    let delta_multi = report.multi_shot.as_ref().map_or(report.best_delta, |m| m.best_delta);
    for s in &scores {
        // 1-shot columns use the best 1-shot δ, multi-shot columns their own
        let one = score_rows(s, report.best_delta, cfg.detection.cs_limit)?;
        let multi = score_rows(s, delta_multi, cfg.detection.cs_limit)?;
        for (mut a, b) in one.into_iter().zip(multi) {
            a.cs = b.cs;
            a.zeta = b.zeta;
            w.serialize(a)?;
        }
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    Ok(report)
}
