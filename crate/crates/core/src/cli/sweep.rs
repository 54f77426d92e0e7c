use std::fs;
use std::io::Write;
use std::path::Path;

use log::{error, info};
use serde::{Deserialize, Serialize};

use crate::cli::experiment::{evaluate_model, train_experiment};
use crate::config::ExperimentConfig;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Rdo,
    Ae,
}

/// One cell of a sweep; the metric fields are empty when the cell failed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub model_type: String,
    pub max_f1: Option<f64>,
    pub anomaly_pct: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub channel_width: usize,
    pub best_delta: Option<f64>,
    pub tp: Option<u64>,
    pub fp: Option<u64>,
    #[serde(rename = "fn")]
    pub fn_: Option<u64>,
    pub seed: u64,
    pub status: String,
}

/// Trains and evaluates every (model, p, seed) cell. A failing cell is
/// recorded with its error and the sweep moves on.
pub fn run_sweep(
    base: &ExperimentConfig,
    ps: &[f64],
    models: &[ModelKind],
    seeds: &[u64],
    out: &Path,
) -> Result<Vec<SweepRow>> {
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let mut rows = Vec::new();
    for &kind in models {
        for &p in ps {
            for &seed in seeds {
                let mut cfg = base.clone();
                cfg.model.bottleneck_enabled = kind == ModelKind::Rdo;
                cfg.data.anomaly_fraction = p;
                cfg.training.seed = seed;
                let name = format!("{}_p{:.4}_s{seed}", cfg.model_type().to_lowercase(), p);
                info!("sweep cell {name}");
                let mut row = SweepRow {
                    model_type: cfg.model_type().to_string(),
                    max_f1: None,
                    anomaly_pct: 100.0 * p,
                    lambda1: cfg.training.lambda1,
                    lambda2: cfg.training.lambda2,
                    channel_width: cfg.model.channel_width,
                    best_delta: None,
                    tp: None,
                    fp: None,
                    fn_: None,
                    seed,
                    status: "ok".into(),
                };
                let result = cfg.validate().and_then(|_| {
                    let trained = train_experiment(&cfg, &out.join(&name))?;
                    Ok(evaluate_model(&trained.model, &cfg, &trained.data.validation, false)?.0)
                });
                match result {
                    Ok(m) => {
                        row.max_f1 = Some(m.best_f1);
                        row.best_delta = Some(m.best_delta);
                        row.tp = Some(m.tp);
                        row.fp = Some(m.fp);
                        row.fn_ = Some(m.fn_);
                    }
                    Err(e) => {
                        error!("sweep cell {name} failed: {e}");
                        row.status = format!("error: {e}");
                    }
                }
                rows.push(row);
            }
        }
    }
    let path = out.join("sweep.csv");
    let mut file = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
    writeln!(file, "# config_sha256={}", base.sha256()).map_err(|e| Error::io(&path, e))?;
    let mut w = csv::Writer::from_writer(file);
    for r in &rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    Ok(rows)
}
