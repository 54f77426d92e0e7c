use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// A labelled multichannel recording.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSeries {
    pub id: String,
    pub feature_names: Vec<String>,
    /// `C × N`, one row per feature column.
    pub channels: Tensor,
    pub timestamps: Vec<String>,
    /// One 0/1 anomaly label per sample.
    pub labels: Vec<u8>,
}

impl LabeledSeries {
    pub fn new(
        id: impl Into<String>,
        feature_names: Vec<String>,
        channels: Tensor,
        timestamps: Vec<String>,
        labels: Vec<u8>,
    ) -> Result<Self> {
        let id = id.into();
        if channels.rank() != 2 || channels.shape()[0] != feature_names.len() {
            return Err(Error::Dimension(format!("set {id}: channel array does not match feature names")));
        }
        let n = channels.shape()[1];
        if labels.len() != n || timestamps.len() != n {
            return Err(Error::Dimension(format!("set {id}: labels or timestamps differ in length")));
        }
        if labels.iter().any(|&l| l > 1) {
            return Err(Error::Contract(format!("set {id}: labels must be 0 or 1")));
        }
        Ok(LabeledSeries {
            id,
            feature_names,
            channels,
            timestamps,
            labels,
        })
    }

    pub fn num_channels(&self) -> usize {
        self.channels.shape()[0]
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Samples before the first anomalous label (the whole series if none).
    pub fn normal_prefix_len(&self) -> usize {
        self.labels.iter().position(|&l| l == 1).unwrap_or(self.len())
    }

    pub fn has_anomalies(&self) -> bool {
        self.labels.contains(&1)
    }
}

/// How to read one delimited file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LoadOptions {
    pub delimiter: char,
    pub timestamp_column: Option<String>,
    pub label_column: String,
    /// Further non-feature columns, such as secondary label columns.
    pub ignored_columns: Vec<String>,
}

impl Default for LoadOptions {
    fn default() -> Self {
        LoadOptions {
            delimiter: ';',
            timestamp_column: Some("datetime".into()),
            label_column: "anomaly".into(),
            ignored_columns: vec!["changepoint".into()],
        }
    }
}

fn parse_err(path: &Path, line: u64, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

/// Reads a delimited file with a header row. Feature columns are every
/// column that is neither the timestamp, the label nor ignored, in header
/// order.
pub fn load_series(path: &Path, opts: &LoadOptions) -> Result<LabeledSeries> {
    if !opts.delimiter.is_ascii() {
        return Err(Error::Config("delimiter must be a single ASCII character".into()));
    }
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(opts.delimiter as u8)
        .has_headers(true)
        .flexible(true)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => parse_err(path, 1, format!("{other:?}")),
        })?;
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| parse_err(path, 1, e.to_string()))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let find = |name: &str| header.iter().position(|h| h == name);
    let label_idx = find(&opts.label_column)
        .ok_or_else(|| parse_err(path, 1, format!("missing label column '{}'", opts.label_column)))?;
    let ts_idx = match &opts.timestamp_column {
        Some(name) => Some(find(name).ok_or_else(|| parse_err(path, 1, format!("missing timestamp column '{name}'")))?),
        None => None,
    };
    let feature_idx: Vec<usize> = (0..header.len())
        .filter(|&i| i != label_idx && Some(i) != ts_idx && !opts.ignored_columns.contains(&header[i]))
        .collect();
    if feature_idx.is_empty() {
        return Err(parse_err(path, 1, "no feature columns"));
    }

    let mut rows: Vec<Vec<f64>> = vec![Vec::new(); feature_idx.len()];
    let (mut timestamps, mut labels) = (Vec::new(), Vec::new());
    for rec in reader.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(path, line, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != header.len() {
            return Err(parse_err(
                path,
                line,
                format!("expected {} fields, found {}", header.len(), rec.len()),
            ));
        }
        for (row, &i) in rows.iter_mut().zip(&feature_idx) {
            let v: f64 = rec[i].trim().parse().map_err(|_| {
                parse_err(path, line, format!("column '{}' is not numeric: '{}'", header[i], &rec[i]))
            })?;
            if !v.is_finite() {
                return Err(parse_err(path, line, format!("column '{}' is not finite", header[i])));
            }
            row.push(v);
        }
        let l: f64 = rec[label_idx]
            .trim()
            .parse()
            .map_err(|_| parse_err(path, line, format!("label '{}' is not 0 or 1", &rec[label_idx])))?;
        if l != 0.0 && l != 1.0 {
            return Err(parse_err(path, line, format!("label '{}' is not 0 or 1", &rec[label_idx])));
        }
        labels.push(u8::from(l == 1.0));
        timestamps.push(ts_idx.map_or_else(|| (labels.len() - 1).to_string(), |i| rec[i].to_string()));
    }
    let n = labels.len();
    let c = feature_idx.len();
    let channels = Tensor::new(vec![c, n], rows.concat())?;
    let id = path.file_stem().map_or_else(|| path.display().to_string(), |s| s.to_string_lossy().into_owned());
    LabeledSeries::new(
        id,
        feature_idx.iter().map(|&i| header[i].clone()).collect(),
        channels,
        timestamps,
        labels,
    )
}

/// Writes `series` in the layout [`load_series`] reads with `opts`.
pub fn write_series(series: &LabeledSeries, out: &mut dyn Write, opts: &LoadOptions) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .delimiter(opts.delimiter as u8)
        .from_writer(out);
    let mut header = Vec::new();
    if let Some(ts) = &opts.timestamp_column {
        header.push(ts.clone());
    }
    header.extend(series.feature_names.iter().cloned());
    header.push(opts.label_column.clone());
    w.write_record(&header)?;
    for t in 0..series.len() {
        let mut rec = Vec::with_capacity(header.len());
        if opts.timestamp_column.is_some() {
            rec.push(series.timestamps[t].clone());
        }
        for c in 0..series.num_channels() {
            rec.push(series.channels.at2(c, t).to_string());
        }
        rec.push(series.labels[t].to_string());
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io("<series csv>", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, text: &str) -> std::path::PathBuf {
        let p = dir.join(name);
        std::fs::write(&p, text).unwrap();
        p
    }

    #[test]
    fn ragged_row_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "r.csv", "datetime;a;b;anomaly\n0;1;2;0\n1;3;0\n");
        match load_series(&p, &LoadOptions::default()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn non_numeric_feature_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "n.csv", "datetime;a;anomaly\n0;1;0\n1;x;0\n2;3;1\n");
        match load_series(&p, &LoadOptions::default()) {
            Err(Error::Parse { line, message, .. }) => {
                assert_eq!(line, 3);
                assert!(message.contains("'a'"), "{message}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn non_binary_label_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "l.csv", "datetime;a;anomaly\n0;1;2\n");
        assert!(matches!(load_series(&p, &LoadOptions::default()), Err(Error::Parse { .. })));
    }

    #[test]
    fn write_then_load_round_trips() {
        let s = LabeledSeries::new(
            "x",
            vec!["u".into(), "v".into()],
            Tensor::matrix(&[vec![0.1, -2.5, 3.0], vec![1e-9, 4.0, 5.5]]).unwrap(),
            vec!["t0".into(), "t1".into(), "t2".into()],
            vec![0, 1, 0],
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.csv");
        let opts = LoadOptions {
            delimiter: ',',
            ..LoadOptions::default()
        };
        write_series(&s, &mut std::fs::File::create(&p).unwrap(), &opts).unwrap();
        assert_eq!(load_series(&p, &opts).unwrap(), s);
    }
}
