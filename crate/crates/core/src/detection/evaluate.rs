use serde::{Deserialize, Serialize};

use crate::detection::metrics::{sweep, Counts, SweepResult};
use crate::detection::scoring::{max_abs_error, scaled_abs_error, subset_means, SUBSET_SIZE};
use crate::detection::stream::{confidence_series, ConfidencePoint};
use crate::error::{Error, Result};
use crate::model::TcnAutoencoder;
use crate::numerics::Tensor;

/// `mæ` and subset means `M̄` of one `C × T` window under `model`.
pub fn window_scores(model: &TcnAutoencoder, window: &Tensor) -> Result<(Vec<f64>, Vec<f64>)> {
    let x_hat = model.forward_eval(window)?;
    let mae = max_abs_error(&scaled_abs_error(window, &x_hat, &model.omega)?)?;
    let means = subset_means(&mae)?;
    Ok((mae, means))
}

/// Per-sample 1-shot scores of a whole series: `mae[t]` and the subset mean
/// `score[t]` that decides sample `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct TiledScores {
    pub mae: Vec<f64>,
    pub score: Vec<f64>,
}

fn check_series(model: &TcnAutoencoder, series: &Tensor) -> Result<usize> {
    let t = model.config().window_length;
    if series.rank() != 2 || series.shape()[0] != model.config().input_channels {
        return Err(Error::Dimension(format!(
            "series {:?} does not have {} channels",
            series.shape(),
            model.config().input_channels
        )));
    }
    if series.shape()[1] < t {
        return Err(Error::Contract(format!(
            "series of {} samples is shorter than the window length {t}",
            series.shape()[1]
        )));
    }
    if !t.is_multiple_of(SUBSET_SIZE) {
        return Err(Error::Contract(format!("window length {t} is not a multiple of {SUBSET_SIZE}")));
    }
    Ok(t)
}

/// Scores a series with non-overlapping windows at stride `T`. When `T`
/// does not divide the length, one more window aligned to the end scores the
/// remaining samples.
pub fn tiled_scores(model: &TcnAutoencoder, series: &Tensor) -> Result<TiledScores> {
    let t = check_series(model, series)?;
    let n = series.shape()[1];
    let mut out = TiledScores {
        mae: Vec::with_capacity(n),
        score: Vec::with_capacity(n),
    };
    let mut start = 0;
    while start + t <= n {
        let (mae, means) = window_scores(model, &series.columns(start, t)?)?;
        out.score.extend(means.iter().flat_map(|&m| std::iter::repeat_n(m, SUBSET_SIZE)));
        out.mae.extend(mae);
        start += t;
    }
    if start < n {
        let tail_start = n - t;
        let (mae, means) = window_scores(model, &series.columns(tail_start, t)?)?;
        let skip = start - tail_start;
        out.mae.extend_from_slice(&mae[skip..]);
        out.score.extend((skip..t).map(|j| means[j / SUBSET_SIZE]));
    }
    Ok(out)
}

/// Subset means of every stride-1 window of `series`.
pub fn sliding_means(model: &TcnAutoencoder, series: &Tensor) -> Result<Vec<Vec<f64>>> {
    let t = check_series(model, series)?;
    (0..=series.shape()[1] - t)
        .map(|k| Ok(window_scores(model, &series.columns(k, t)?)?.1))
        .collect()
}

pub fn threshold(scores: &[f64], delta: f64) -> Vec<u8> {
    scores.iter().map(|&s| u8::from(s > delta)).collect()
}

/// Confidence scores from stride-1 window means at threshold `delta`.
pub fn multi_shot_points(
    window_means: &[Vec<f64>],
    window_length: usize,
    delta: f64,
    limit: f64,
) -> Result<Vec<ConfidencePoint>> {
    let votes: Vec<Vec<u8>> = window_means
        .iter()
        .map(|m| m.iter().flat_map(|&v| std::iter::repeat_n(u8::from(v > delta), SUBSET_SIZE)).collect())
        .collect();
    confidence_series(&votes, window_length, limit)
}

/// Everything needed to evaluate one labelled series at any threshold.
#[derive(Debug, Clone)]
pub struct SetScores {
    pub id: String,
    pub labels: Vec<u8>,
    pub tiled: TiledScores,
    pub sliding: Option<Vec<Vec<f64>>>,
    pub window_length: usize,
}

pub fn score_set(
    model: &TcnAutoencoder,
    id: &str,
    series: &Tensor,
    labels: &[u8],
    with_sliding: bool,
) -> Result<SetScores> {
    if labels.len() != series.shape().get(1).copied().unwrap_or(0) {
        return Err(Error::Contract(format!("set {id} needs one label per sample")));
    }
    Ok(SetScores {
        id: id.to_string(),
        labels: labels.to_vec(),
        tiled: tiled_scores(model, series)?,
        sliding: if with_sliding { Some(sliding_means(model, series)?) } else { None },
        window_length: model.config().window_length,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SetBreakdown {
    pub id: String,
    pub counts: Counts,
    pub f1: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub sweep: SweepResult,
    pub per_set: Vec<SetBreakdown>,
}

fn breakdown(per_set: Vec<(String, Counts)>) -> Vec<SetBreakdown> {
    per_set
        .into_iter()
        .map(|(id, counts)| SetBreakdown {
            id,
            f1: counts.f1().ok(),
            counts,
        })
        .collect()
}

fn one_shot_counts(sets: &[SetScores], delta: f64) -> Result<Vec<(String, Counts)>> {
    sets.iter()
        .map(|s| Ok((s.id.clone(), Counts::from_sequences(&threshold(&s.tiled.score, delta), &s.labels)?)))
        .collect()
}

fn multi_shot_counts(sets: &[SetScores], delta: f64, limit: f64) -> Result<Vec<(String, Counts)>> {
    sets.iter()
        .map(|s| {
            let means = s
                .sliding
                .as_ref()
                .ok_or_else(|| Error::Contract(format!("set {} was scored without sliding windows", s.id)))?;
            let zeta: Vec<u8> = multi_shot_points(means, s.window_length, delta, limit)?
                .iter()
                .map(|p| p.zeta)
                .collect();
            Ok((s.id.clone(), Counts::from_sequences(&zeta, &s.labels)?))
        })
        .collect()
}

fn pooled(per_set: &[(String, Counts)]) -> Counts {
    let mut c = Counts::default();
    for (_, s) in per_set {
        c.add(*s);
    }
    c
}

/// 1-shot F1 over `deltas`, pooling counts across all sets.
pub fn evaluate_one_shot(sets: &[SetScores], deltas: &[f64]) -> Result<Evaluation> {
    let sweep = sweep(deltas, |d| Ok(pooled(&one_shot_counts(sets, d)?)))?;
    let per_set = breakdown(one_shot_counts(sets, sweep.best_delta)?);
    Ok(Evaluation { sweep, per_set })
}

/// Multi-shot F1 over `deltas` at a fixed confidence limit.
pub fn evaluate_multi_shot(sets: &[SetScores], deltas: &[f64], limit: f64) -> Result<Evaluation> {
    let sweep = sweep(deltas, |d| Ok(pooled(&multi_shot_counts(sets, d, limit)?)))?;
    let per_set = breakdown(multi_shot_counts(sets, sweep.best_delta, limit)?);
    Ok(Evaluation { sweep, per_set })
}

/// One row of a per-sample score dump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub set: String,
    pub t: usize,
    pub mae: f64,
    pub score: f64,
    pub d: u8,
    pub cs: Option<f64>,
    pub zeta: Option<u8>,
    pub label: u8,
}

/// Per-sample rows of one set at the given thresholds.
pub fn score_rows(s: &SetScores, delta: f64, limit: f64) -> Result<Vec<ScoreRow>> {
    let points = match &s.sliding {
        Some(m) => Some(multi_shot_points(m, s.window_length, delta, limit)?),
        None => None,
    };
    Ok((0..s.labels.len())
        .map(|t| ScoreRow {
            set: s.id.clone(),
            t,
            mae: s.tiled.mae[t],
            score: s.tiled.score[t],
            d: u8::from(s.tiled.score[t] > delta),
            cs: points.as_ref().map(|p| p[t].cs),
            zeta: points.as_ref().map(|p| p[t].zeta),
            label: s.labels[t],
        })
        .collect())
}
