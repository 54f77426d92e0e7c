use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// Fixed-size windows cut from one or more series. The source ids and
/// offsets are bookkeeping for tracing a window back to its origin; nothing
/// here is ever fed to a model besides `windows`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct WindowBatch {
    pub windows: Vec<Tensor>,
    pub sources: Vec<(String, usize)>,
}

impl WindowBatch {
    pub fn len(&self) -> usize {
        self.windows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }

    pub fn push(&mut self, window: Tensor, set: &str, offset: usize) {
        self.windows.push(window);
        self.sources.push((set.to_string(), offset));
    }
}

/// Start offsets `0, stride, 2·stride, …` of every full window.
pub fn window_offsets(n: usize, length: usize, stride: usize) -> Result<Vec<usize>> {
    if length == 0 || stride == 0 {
        return Err(Error::Contract("window length and stride must be >= 1".into()));
    }
    if n < length {
        return Err(Error::Contract(format!("series of {n} samples is shorter than a window of {length}")));
    }
    Ok((0..=(n - length) / stride).map(|k| k * stride).collect())
}

/// Cuts `series` (`C × N`) into windows of `length` samples.
pub fn window(series: &Tensor, set: &str, length: usize, stride: usize) -> Result<WindowBatch> {
    if series.rank() != 2 {
        return Err(Error::Dimension(format!("expected channels x time, got {:?}", series.shape())));
    }
    let mut batch = WindowBatch::default();
    for off in window_offsets(series.shape()[1], length, stride)? {
        batch.push(series.columns(off, length)?, set, off);
    }
    Ok(batch)
}
