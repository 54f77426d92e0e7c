use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::detection::scoring::multi_shot;

/// Confidence score of one time step once every window covering it is in.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConfidencePoint {
    /// Zero-based sample index.
    pub t: usize,
    /// Sum of the 1-shot votes covering `t`.
    pub votes: u32,
    /// Number of windows covering `t`; `CS_t = votes / windows`.
    pub windows: u32,
    pub cs: f64,
    pub zeta: u8,
}

/// Accumulates the per-time votes of stride-1 windows.
///
/// Window `k` covers samples `k ..= k + T − 1`. Sample `t` is final once the
/// window starting at `t` has been pushed, at which point it has collected
/// `min(t + 1, T)` votes. The last `T − 1` samples are released by
/// [`ConfidenceStream::finish`] with the votes they have.
#[derive(Debug, Clone)]
pub struct ConfidenceStream {
    window_length: usize,
    limit: f64,
    /// Vote sum and window count for samples `next ..`.
    pending: VecDeque<(u32, u32)>,
    next: usize,
}

impl ConfidenceStream {
    pub fn new(window_length: usize, limit: f64) -> Result<Self> {
        if window_length == 0 || !(limit > 0.0 && limit <= 1.0) {
            return Err(Error::Contract("window length must be >= 1 and limit in (0, 1]".into()));
        }
        Ok(ConfidenceStream {
            window_length,
            limit,
            pending: VecDeque::with_capacity(window_length),
            next: 0,
        })
    }

    /// Number of windows pushed so far.
    pub fn windows_seen(&self) -> usize {
        self.next
    }

    fn point(&self, t: usize, (votes, windows): (u32, u32)) -> ConfidencePoint {
        let cs = f64::from(votes) / f64::from(windows);
        ConfidencePoint {
            t,
            votes,
            windows,
            cs,
            zeta: multi_shot(cs, self.limit),
        }
    }

    /// Adds the per-time votes of the next window and returns the sample
    /// that just became final.
    pub fn push(&mut self, votes: &[u8]) -> Result<ConfidencePoint> {
        if votes.len() != self.window_length {
            return Err(Error::Contract(format!(
                "window carries {} votes, stream expects {}",
                votes.len(),
                self.window_length
            )));
        }
        self.pending.resize(self.window_length, (0, 0));
        for (slot, &v) in self.pending.iter_mut().zip(votes) {
            slot.0 += u32::from(v);
            slot.1 += 1;
        }
        let done = self.pending.pop_front().expect("resized above");
        let p = self.point(self.next, done);
        self.next += 1;
        Ok(p)
    }

    /// Releases the samples covered only by already-pushed windows.
    pub fn finish(mut self) -> Vec<ConfidencePoint> {
        let start = self.next;
        let pending = std::mem::take(&mut self.pending);
        pending
            .into_iter()
            .take_while(|s| s.1 > 0)
            .enumerate()
            .map(|(i, s)| self.point(start + i, s))
            .collect()
    }
}

/// Runs a full stream over per-window vote vectors.
pub fn confidence_series(window_votes: &[Vec<u8>], window_length: usize, limit: f64) -> Result<Vec<ConfidencePoint>> {
    let mut s = ConfidenceStream::new(window_length, limit)?;
    let mut out = Vec::with_capacity(window_votes.len() + window_length);
    for v in window_votes {
        out.push(s.push(v)?);
    }
    out.extend(s.finish());
    Ok(out)
}
