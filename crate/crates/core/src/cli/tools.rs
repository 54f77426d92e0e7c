use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bottleneck::{compress, decompress, Bitstream};
use crate::cli::experiment::{load_run, write_json, RunManifest};
use crate::config::ExperimentConfig;
use crate::data::{load_series, synth_corpus, write_series, LabeledSeries, LoadOptions};
use crate::detection::{threshold, tiled_scores, window_scores, ConfidenceStream, Counts, SUBSET_SIZE};
use crate::error::{Error, Result};
use crate::model::TcnAutoencoder;

fn load_options(cfg: &ExperimentConfig) -> LoadOptions {
    cfg.data.files.as_ref().map(|f| f.load.clone()).unwrap_or_default()
}

/// Loads `path` with the run's file layout and training normalisation.
pub fn load_normalized(manifest: &RunManifest, path: &Path) -> Result<LabeledSeries> {
    let s = load_series(path, &load_options(&manifest.experiment))?;
    manifest.corpus.normalization.apply_series(&s)
}

/// One row of the streaming output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamRow {
    pub t: usize,
    pub mae: f64,
    pub cs: f64,
    pub zeta: u8,
    pub label: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamSummary {
    pub config_sha256: String,
    pub series: String,
    pub delta: f64,
    pub cs_limit: f64,
    pub samples: usize,
    pub windows: usize,
    pub one_shot_f1: Option<f64>,
    pub one_shot: Counts,
    pub multi_shot_f1: Option<f64>,
    pub multi_shot: Counts,
}

/// Advances a window one sample at a time over `series`, feeding each
/// window's 1-shot votes into a confidence stream.
pub fn stream_series(
    model: &TcnAutoencoder,
    series: &LabeledSeries,
    delta: f64,
    limit: f64,
    config_sha256: &str,
) -> Result<(Vec<StreamRow>, StreamSummary)> {
    let t_len = model.config().window_length;
    let tiled = tiled_scores(model, &series.channels)?;
    let mut stream = ConfidenceStream::new(t_len, limit)?;
    let mut points = Vec::with_capacity(series.len());
    for k in 0..=series.len() - t_len {
        let (_, means) = window_scores(model, &series.channels.columns(k, t_len)?)?;
        let votes: Vec<u8> = means
            .iter()
            .flat_map(|&m| std::iter::repeat_n(u8::from(m > delta), SUBSET_SIZE))
            .collect();
        points.push(stream.push(&votes)?);
    }
    let windows = stream.windows_seen();
    points.extend(stream.finish());
    let rows: Vec<StreamRow> = points
        .iter()
        .map(|p| StreamRow {
            t: p.t,
            mae: tiled.mae[p.t],
            cs: p.cs,
            zeta: p.zeta,
            label: series.labels[p.t],
        })
        .collect();
    let zeta: Vec<u8> = rows.iter().map(|r| r.zeta).collect();
    let one = Counts::from_sequences(&threshold(&tiled.score, delta), &series.labels)?;
    let multi = Counts::from_sequences(&zeta, &series.labels)?;
    let summary = StreamSummary {
        config_sha256: config_sha256.to_string(),
        series: series.id.clone(),
        delta,
        cs_limit: limit,
        samples: series.len(),
        windows,
        one_shot_f1: one.f1().ok(),
        one_shot: one,
        multi_shot_f1: multi.f1().ok(),
        multi_shot: multi,
    };
    Ok((rows, summary))
}

/// `stream`: writes the per-sample CSV to `out` and returns the summary.
pub fn stream_command(checkpoint: &Path, series_path: &Path, delta: Option<f64>, out: &Path) -> Result<StreamSummary> {
    let (model, manifest) = load_run(checkpoint)?;
    let series = load_normalized(&manifest, series_path)?;
    let det = &manifest.experiment.detection;
    let (rows, summary) = stream_series(
        &model,
        &series,
        delta.unwrap_or(det.delta),
        det.cs_limit,
        &manifest.config_sha256,
    )?;
    if let Some(dir) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut file = fs::File::create(out).map_err(|e| Error::io(out, e))?;
    writeln!(file, "# config_sha256={}", manifest.config_sha256).map_err(|e| Error::io(out, e))?;
    let mut w = csv::Writer::from_writer(file);
    for r in &rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(out, e))?;
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompressStats {
    pub config_sha256: String,
    pub windows: usize,
    pub symbols: usize,
    /// Ideal code length under the integer tables.
    pub estimated_bits: f64,
    /// Code length estimated by the continuous density.
    pub model_rate_bits: f64,
    pub payload_bytes: usize,
    pub total_bytes: usize,
    pub escapes: usize,
    /// Every bitstream decoded to its own symbols.
    pub lossless: bool,
    /// Decoding the decompressed symbols reproduced every reconstruction.
    pub reconstruction_exact: bool,
}

/// Codes the latent of every non-overlapping window of `series`.
pub fn compress_series(model: &TcnAutoencoder, series: &LabeledSeries, config_sha256: &str) -> Result<(Vec<Bitstream>, CompressStats)> {
    let tables = model
        .coding_tables
        .as_ref()
        .ok_or_else(|| Error::Contract("checkpoint has no coding tables (autoencoder mode?)".into()))?;
    let density = model.density().ok_or_else(|| Error::Contract("model has no density".into()))?;
    let t_len = model.config().window_length;
    let mut stats = CompressStats {
        config_sha256: config_sha256.to_string(),
        windows: 0,
        symbols: 0,
        estimated_bits: 0.0,
        model_rate_bits: 0.0,
        payload_bytes: 0,
        total_bytes: 0,
        escapes: 0,
        lossless: true,
        reconstruction_exact: true,
    };
    let mut streams = Vec::new();
    let mut start = 0;
    while start + t_len <= series.len() {
        let x = series.channels.columns(start, t_len)?;
        let symbols = model.latent_symbols(&x)?;
        let stream = compress(&symbols, tables)?;
        let back = decompress(&Bitstream::from_bytes(&stream.to_bytes())?.0, tables)?;
        stats.lossless &= back == symbols;
        stats.reconstruction_exact &= model.decode_symbols(&back)? == model.forward_eval(&x)?;
        let z: Vec<f64> = symbols.iter().map(|&s| s as f64).collect();
        stats.model_rate_bits += density.rate_bits(model.params(), &z)?;
        stats.estimated_bits += tables.cost_bits(&symbols);
        stats.escapes += tables.escapes(&symbols);
        stats.symbols += symbols.len();
        stats.payload_bytes += stream.payload.len();
        stats.total_bytes += stream.len_bytes();
        stats.windows += 1;
        streams.push(stream);
        start += t_len;
    }
    if stats.windows == 0 {
        return Err(Error::Contract("series is shorter than one window".into()));
    }
    Ok((streams, stats))
}

/// `compress`: writes `latents.bin` (the bitstreams back to back) and
/// `compress.json` into `out`.
pub fn compress_command(checkpoint: &Path, series_path: &Path, out: &Path) -> Result<CompressStats> {
    let (model, manifest) = load_run(checkpoint)?;
    let series = load_normalized(&manifest, series_path)?;
    let (streams, stats) = compress_series(&model, &series, &manifest.config_sha256)?;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let bytes: Vec<u8> = streams.iter().flat_map(|s| s.to_bytes()).collect();
    let path = out.join("latents.bin");
    fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
    write_json(&out.join("compress.json"), &stats)?;
    Ok(stats)
}

/// `synth`: writes every synthetic set of `cfg.data.synth` as a CSV in `out`.
pub fn synth_command(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<std::path::PathBuf>> {
    let synth = cfg
        .data
        .synth
        .as_ref()
        .ok_or_else(|| Error::Config("config has no data.synth section".into()))?;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let opts = LoadOptions::default();
    let mut paths = Vec::new();
    for s in synth_corpus(synth, cfg.data.synth_seed)? {
        let path = out.join(format!("{}.csv", s.series.id));
        let mut f = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        write_series(&s.series, &mut f, &opts)?;
        paths.push(path);
    }
    Ok(paths)
}
