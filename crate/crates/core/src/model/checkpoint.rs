//! Checkpoint directory layout.
//!
//! `model.bin` holds every parameter as little-endian `f64`, in declaration
//! order, after a 13-byte header:
//!
//! | offset | size | field                          |
//! |--------|------|--------------------------------|
//! | 0      | 4    | magic `LTCK`                   |
//! | 4      | 1    | format version (`1`)           |
//! | 5      | 8    | total scalar count (u64)       |
//! | 13     | 8·n  | parameter values               |
//!
//! `model.json` carries the format version, architecture, the dilation of
//! each block, parameter names and shapes (same order), ω, the coding tables
//! and the SHA-256 of `model.bin`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bottleneck::CodingTables;
use crate::error::{Error, Result};
use crate::model::{TcnAutoencoder, TcnConfig};
use crate::numerics::RngState;

pub const MAGIC: [u8; 4] = *b"LTCK";
pub const FORMAT_VERSION: u8 = 1;
const HEADER_LEN: usize = 13;
pub const BIN_FILE: &str = "model.bin";
pub const JSON_FILE: &str = "model.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamEntry {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelManifest {
    pub format_version: u8,
    pub config: TcnConfig,
    pub dilations: Vec<usize>,
    pub params: Vec<ParamEntry>,
    pub omega: Vec<f64>,
    pub coding_tables: Option<CodingTables>,
    pub params_sha256: String,
}

/// Serializes parameter values to the `model.bin` byte layout.
pub fn params_to_bytes(model: &TcnAutoencoder) -> Vec<u8> {
    let n = model.params().num_scalars();
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * n);
    out.extend_from_slice(&MAGIC);
    out.push(FORMAT_VERSION);
    out.extend_from_slice(&(n as u64).to_le_bytes());
    for (_, p) in model.params().iter() {
        for v in p.value.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn manifest(model: &TcnAutoencoder, bin: &[u8]) -> ModelManifest {
    ModelManifest {
        format_version: FORMAT_VERSION,
        config: model.config().clone(),
        dilations: model.block_dilations(),
        params: model
            .params()
            .iter()
            .map(|(_, p)| ParamEntry {
                name: p.name.clone(),
                shape: p.value.shape().to_vec(),
            })
            .collect(),
        omega: model.omega.clone(),
        coding_tables: model.coding_tables.clone(),
        params_sha256: hex::encode(Sha256::digest(bin)),
    }
}

/// Writes `model.bin` and `model.json` into `dir`, creating it if needed.
pub fn save_checkpoint(model: &TcnAutoencoder, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let bin = params_to_bytes(model);
    let json = serde_json::to_string_pretty(&manifest(model, &bin))?;
    let bin_path = dir.join(BIN_FILE);
    fs::write(&bin_path, &bin).map_err(|e| Error::io(&bin_path, e))?;
    let json_path = dir.join(JSON_FILE);
    fs::write(&json_path, json + "\n").map_err(|e| Error::io(&json_path, e))?;
    Ok(())
}

pub fn load_checkpoint(dir: &Path) -> Result<TcnAutoencoder> {
    let json_path = dir.join(JSON_FILE);
    let text = fs::read_to_string(&json_path).map_err(|e| Error::io(&json_path, e))?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    let m: ModelManifest = serde_path_to_error::deserialize(de)
        .map_err(|e| Error::Checkpoint(format!("{}: {e}", json_path.display())))?;
    let bin_path = dir.join(BIN_FILE);
    let bin = fs::read(&bin_path).map_err(|e| Error::io(&bin_path, e))?;
    from_parts(&m, &bin)
}

/// Rebuilds a model from its manifest and `model.bin` bytes.
pub fn from_parts(m: &ModelManifest, bin: &[u8]) -> Result<TcnAutoencoder> {
    if m.format_version != FORMAT_VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported checkpoint version {}",
            m.format_version
        )));
    }
    if hex::encode(Sha256::digest(bin)) != m.params_sha256 {
        return Err(Error::Checkpoint("model.bin does not match its manifest hash".into()));
    }
    if m.dilations != m.config.dilations() {
        return Err(Error::Checkpoint(format!(
            "dilation schedule {:?} is not 2^l per block",
            m.dilations
        )));
    }
    if bin.len() < HEADER_LEN || bin[..4] != MAGIC || bin[4] != FORMAT_VERSION {
        return Err(Error::Checkpoint("model.bin has a bad header".into()));
    }
    let n = u64::from_le_bytes(bin[5..13].try_into().expect("8 bytes")) as usize;
    if bin.len() != HEADER_LEN + 8 * n {
        return Err(Error::Checkpoint("model.bin length disagrees with its header".into()));
    }

    let mut model = TcnAutoencoder::new(m.config.clone(), &mut RngState::new(0))
        .map_err(|e| Error::Checkpoint(format!("stored architecture is invalid: {e}")))?;
    if model.params().len() != m.params.len() || model.params().num_scalars() != n {
        return Err(Error::Checkpoint("parameter list does not match the architecture".into()));
    }
    let mut values = bin[HEADER_LEN..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")));
    for (p, entry) in model.params_mut().iter_mut().zip(&m.params) {
        if p.name != entry.name || p.value.shape() != entry.shape.as_slice() {
            return Err(Error::Checkpoint(format!(
                "parameter {} {:?} found where {} {:?} was expected",
                entry.name,
                entry.shape,
                p.name,
                p.value.shape()
            )));
        }
        for v in p.value.data_mut() {
            *v = values.next().expect("length checked");
        }
    }
    if m.omega.len() != m.config.input_channels || m.omega.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
        return Err(Error::Checkpoint("omega must hold one positive value per channel".into()));
    }
    model.omega = m.omega.clone();
    if let Some(t) = &m.coding_tables {
        let t = CodingTables::new(t.tables.clone())?;
        if t.latent_dim() != m.config.latent_dim {
            return Err(Error::Checkpoint("coding tables do not match latent_dim".into()));
        }
        model.coding_tables = Some(t);
    }
    Ok(model)
}
