//! Reconstruction-error scoring, 1-shot and multi-shot decisions, and F1.

mod evaluate;
mod metrics;
mod scoring;
mod stream;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use evaluate::{
    evaluate_multi_shot, evaluate_one_shot, multi_shot_points, score_rows, score_set, sliding_means,
    threshold, tiled_scores, window_scores, Evaluation, ScoreRow, SetBreakdown, SetScores, TiledScores,
};
pub use metrics::{f1_score, sweep, Counts, DeltaGrid, SweepResult};
pub use scoring::{
    detect_window, expand_votes, max_abs_error, multi_shot, one_shot, scaled_abs_error, subset_means,
    DetectionSeries, SUBSET_SIZE,
};
pub use stream::{confidence_series, ConfidencePoint, ConfidenceStream};

/// Operating thresholds for 1-shot and multi-shot decisions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DetectionConfig {
    pub delta: f64,
    pub cs_limit: f64,
    pub delta_grid: DeltaGrid,
}

impl Default for DetectionConfig {
    fn default() -> Self {
        DetectionConfig {
            delta: 1.0,
            cs_limit: 0.85,
            delta_grid: DeltaGrid::default(),
        }
    }
}

impl DetectionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta.is_finite() && self.delta > 0.0) {
            return Err(Error::Config("detection.delta must be finite and > 0".into()));
        }
        if !(self.cs_limit > 0.0 && self.cs_limit <= 1.0) {
            return Err(Error::Config("detection.cs_limit must lie in (0, 1]".into()));
        }
        self.delta_grid.validate()
    }
}
