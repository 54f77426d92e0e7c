use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-sample confusion counts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl Counts {
    pub fn from_sequences(predictions: &[u8], labels: &[u8]) -> Result<Self> {
        if predictions.len() != labels.len() {
            return Err(Error::Dimension(format!(
                "{} predictions for {} labels",
                predictions.len(),
                labels.len()
            )));
        }
        let mut c = Counts::default();
        for (&p, &l) in predictions.iter().zip(labels) {
            match (p != 0, l != 0) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, true) => c.fn_ += 1,
                (false, false) => c.tn += 1,
            }
        }
        Ok(c)
    }

    pub fn add(&mut self, other: Counts) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.fn_ += other.fn_;
        self.tn += other.tn;
    }

    /// `2TP / (2TP + FP + FN)`; errors when there are no positives at all.
    pub fn f1(&self) -> Result<f64> {
        let den = 2 * self.tp + self.fp + self.fn_;
        if den == 0 {
            return Err(Error::Domain("F1 is undefined without any positive label or prediction".into()));
        }
        Ok(2.0 * self.tp as f64 / den as f64)
    }
}

pub fn f1_score(predictions: &[u8], labels: &[u8]) -> Result<(f64, Counts)> {
    let c = Counts::from_sequences(predictions, labels)?;
    Ok((c.f1()?, c))
}

/// Evenly spaced threshold values `start, start + step, …, stop`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeltaGrid {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl Default for DeltaGrid {
    fn default() -> Self {
        DeltaGrid {
            start: 0.2,
            stop: 3.0,
            step: 0.05,
        }
    }
}

impl DeltaGrid {
    pub fn validate(&self) -> Result<()> {
        let ok = self.start.is_finite()
            && self.stop.is_finite()
            && self.step.is_finite()
            && self.start > 0.0
            && self.stop >= self.start
            && self.step > 0.0
            && (self.stop - self.start) / self.step <= 1e6;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid delta grid {self:?}")))
        }
    }

    pub fn values(&self) -> Vec<f64> {
        let n = ((self.stop - self.start) / self.step + 1e-9).floor() as usize + 1;
        (0..n).map(|i| self.start + i as f64 * self.step).collect()
    }
}

/// Best point of a threshold sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub best_delta: f64,
    pub best_f1: f64,
    pub counts: Counts,
    /// `(δ, F1)` for every grid value where F1 is defined.
    pub curve: Vec<(f64, f64)>,
}

/// Evaluates `counts_at(δ)` over `deltas` and keeps the highest F1 (the
/// smallest δ among ties).
pub fn sweep(deltas: &[f64], mut counts_at: impl FnMut(f64) -> Result<Counts>) -> Result<SweepResult> {
    let mut best: Option<SweepResult> = None;
    let mut curve = Vec::with_capacity(deltas.len());
    for &d in deltas {
        let c = counts_at(d)?;
        let Ok(f) = c.f1() else { continue };
        curve.push((d, f));
        if best.as_ref().is_none_or(|b| f > b.best_f1) {
            best = Some(SweepResult {
                best_delta: d,
                best_f1: f,
                counts: c,
                curve: Vec::new(),
            });
        }
    }
    let mut best = best.ok_or_else(|| Error::Domain("F1 undefined at every threshold".into()))?;
    best.curve = curve;
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_detector() {
        let l = [0, 1, 1, 0, 1];
        assert_eq!(f1_score(&l, &l).unwrap().0, 1.0);
    }

    #[test]
    fn formula() {
        let c = Counts { tp: 2, fp: 1, fn_: 1, tn: 0 };
        assert!((c.f1().unwrap() - 4.0 / 6.0).abs() < 1e-15);
        let (f, c) = f1_score(&[1, 1, 1, 0, 0], &[1, 1, 0, 1, 0]).unwrap();
        assert_eq!((c.tp, c.fp, c.fn_, c.tn), (2, 1, 1, 1));
        assert_eq!(f, 4.0 / 6.0);
    }

    #[test]
    fn degenerate_is_an_error() {
        assert!(matches!(f1_score(&[0, 0], &[0, 0]), Err(Error::Domain(_))));
        assert!(matches!(f1_score(&[0], &[0, 1]), Err(Error::Dimension(_))));
    }

    #[test]
    fn default_grid() {
        let v = DeltaGrid::default().values();
        assert_eq!(v.len(), 57);
        assert!((v[0] - 0.2).abs() < 1e-12 && (v[56] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn sweep_keeps_first_best() {
        let scores = [0.5, 2.0, 2.5, 0.1];
        let labels = [0u8, 1, 1, 0];
        let r = sweep(&[0.2, 0.4, 1.0, 2.2, 3.0], |d| {
            let p: Vec<u8> = scores.iter().map(|&s| u8::from(s > d)).collect();
            Counts::from_sequences(&p, &labels)
        })
        .unwrap();
        assert_eq!(r.best_delta, 1.0);
        assert_eq!(r.best_f1, 1.0);
        // δ = 3.0 flags nothing and still has positives to miss
        assert_eq!(r.curve.len(), 5);
    }
}
