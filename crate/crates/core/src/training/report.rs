use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Epoch means of the unscaled loss components. In autoencoder mode `rate`
/// and `reconstruction` are 0 and `total` is the reconstruction MSE.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub rate: f64,
    pub distortion: f64,
    pub reconstruction: f64,
    pub total: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochStats>,
    /// Epoch whose parameters the returned model carries.
    pub best_epoch: Option<usize>,
}

impl TrainReport {
    pub fn last(&self) -> Option<&EpochStats> {
        self.epochs.last()
    }

    /// Writes `epoch,rate,distortion,reconstruction,total,seconds`, preceded
    /// by a `# config_sha256=` comment line when a hash is given.
    pub fn write_csv(&self, out: &mut dyn Write, config_sha256: Option<&str>) -> Result<()> {
        if let Some(h) = config_sha256 {
            writeln!(out, "# config_sha256={h}").map_err(|e| Error::io("<train report>", e))?;
        }
        let mut w = csv::Writer::from_writer(out);
        for e in &self.epochs {
            w.serialize(e)?;
        }
        w.flush().map_err(|e| Error::io("<train report>", e))?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path, config_sha256: Option<&str>) -> Result<()> {
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(&mut f, config_sha256)
    }
}
