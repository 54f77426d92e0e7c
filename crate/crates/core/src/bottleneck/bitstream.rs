//! Quantized PMF tables and the latent bitstream container.
//!
//! Byte layout of one [`Bitstream`] (all integers little-endian):
//!
//! | offset | size | field                                   |
//! |--------|------|-----------------------------------------|
//! | 0      | 4    | magic `LTCB`                            |
//! | 4      | 1    | format version (`1`)                    |
//! | 5      | 4    | latent length `N` (u32)                 |
//! | 9      | 4    | PMF table-set id (u32)                  |
//! | 13     | 4    | payload length `L` in bytes (u32)       |
//! | 17     | L    | range-coded payload                     |
//!
//! The payload codes one symbol per latent dimension, in order, each with
//! that dimension's table. Table `i` covers the integers
//! `offset_i ..= offset_i + n_i − 1` plus a final escape symbol. An escaped
//! value is followed by its zigzag-encoded `i32` as four uniform bytes,
//! most significant first.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bottleneck::range_coder::{RangeDecoder, RangeEncoder};
use crate::error::{Error, Result};

pub const MAGIC: [u8; 4] = *b"LTCB";
pub const VERSION: u8 = 1;
pub const HEADER_LEN: usize = 17;
/// Frequencies of every table sum to `2^PRECISION`.
pub const PRECISION: u32 = 16;
const TOTAL: u32 = 1 << PRECISION;
const MAX_SYMBOLS: usize = 4096;

/// Integer-frequency model of one latent dimension.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PmfTable {
    /// Value of the first in-support symbol.
    pub offset: i64,
    /// One frequency per in-support value, then the escape frequency.
    pub freqs: Vec<u32>,
}

impl PmfTable {
    /// Quantizes `probs` (one per value starting at `offset`) to integer
    /// frequencies; whatever mass `probs` leaves over goes to the escape.
    /// Every symbol keeps a frequency of at least 1.
    pub fn from_probabilities(offset: i64, probs: &[f64]) -> Result<Self> {
        let n = probs.len() + 1;
        if probs.is_empty() || n > MAX_SYMBOLS {
            return Err(Error::Contract(format!(
                "PMF support of {} values is outside 1..{}",
                probs.len(),
                MAX_SYMBOLS
            )));
        }
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::Contract("PMF has negative or non-finite entries".into()));
        }
        let in_support: f64 = probs.iter().sum();
        let escape = (1.0 - in_support).max(0.0);
        let mut all: Vec<f64> = probs.to_vec();
        all.push(escape);
        let mass: f64 = all.iter().sum();
        let spare = f64::from(TOTAL - n as u32);
        let mut freqs: Vec<u32> = all
            .iter()
            .map(|p| 1 + (p / mass * spare).floor() as u32)
            .collect();
        let assigned: u32 = freqs.iter().sum();
        // hand the rounding remainder to the most probable symbol
        let argmax = freqs
            .iter()
            .enumerate()
            .max_by_key(|(i, f)| (**f, std::cmp::Reverse(*i)))
            .map(|(i, _)| i)
            .unwrap_or(0);
        freqs[argmax] += TOTAL - assigned;
        Ok(PmfTable { offset, freqs })
    }

    pub fn support_len(&self) -> usize {
        self.freqs.len() - 1
    }

    fn escape_index(&self) -> usize {
        self.freqs.len() - 1
    }

    fn cum(&self, idx: usize) -> u32 {
        self.freqs[..idx].iter().sum()
    }

    fn index_of(&self, value: i64) -> Option<usize> {
        let i = value.checked_sub(self.offset)?;
        (0..self.support_len() as i64).contains(&i).then_some(i as usize)
    }

    /// Model probability of `value` (escape mass for out-of-support values).
    pub fn probability(&self, value: i64) -> f64 {
        let idx = self.index_of(value).unwrap_or(self.escape_index());
        f64::from(self.freqs[idx]) / f64::from(TOTAL)
    }

    /// Ideal code length of `value` in bits under this table, including
    /// the 32 raw bits behind an escape.
    pub fn cost_bits(&self, value: i64) -> f64 {
        let base = -self.probability(value).log2();
        if self.index_of(value).is_some() {
            base
        } else {
            base + 32.0
        }
    }

    fn validate(&self) -> Result<()> {
        if self.freqs.len() < 2
            || self.freqs.contains(&0)
            || self.freqs.iter().map(|&f| u64::from(f)).sum::<u64>() != u64::from(TOTAL)
        {
            return Err(Error::Bitstream("malformed PMF table".into()));
        }
        Ok(())
    }
}

/// One PMF table per latent dimension.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodingTables {
    pub tables: Vec<PmfTable>,
}

impl CodingTables {
    pub fn new(tables: Vec<PmfTable>) -> Result<Self> {
        for t in &tables {
            t.validate()?;
        }
        Ok(CodingTables { tables })
    }

    pub fn latent_dim(&self) -> usize {
        self.tables.len()
    }

    /// First four bytes of the SHA-256 of the canonical table encoding.
    pub fn id(&self) -> u32 {
        let mut h = Sha256::new();
        for t in &self.tables {
            h.update(t.offset.to_le_bytes());
            h.update((t.freqs.len() as u32).to_le_bytes());
            for f in &t.freqs {
                h.update(f.to_le_bytes());
            }
        }
        let d = h.finalize();
        u32::from_le_bytes([d[0], d[1], d[2], d[3]])
    }

    /// Ideal code length of `symbols` in bits under these tables.
    pub fn cost_bits(&self, symbols: &[i64]) -> f64 {
        symbols
            .iter()
            .zip(&self.tables)
            .map(|(&s, t)| t.cost_bits(s))
            .sum()
    }

    /// Number of symbols that fall outside their table's support.
    pub fn escapes(&self, symbols: &[i64]) -> usize {
        symbols
            .iter()
            .zip(&self.tables)
            .filter(|(s, t)| t.index_of(**s).is_none())
            .count()
    }

    fn check_len(&self, n: usize) -> Result<()> {
        if n != self.tables.len() {
            return Err(Error::Dimension(format!(
                "latent of length {n} but {} coding tables",
                self.tables.len()
            )));
        }
        Ok(())
    }

    /// Encodes symbols without a header, one table per symbol, cycling
    /// through the tables when `symbols` is longer than the table set.
    pub fn encode_payload(&self, symbols: &[i64]) -> Result<Vec<u8>> {
        if self.tables.is_empty() {
            return Err(Error::Contract("no coding tables".into()));
        }
        let mut enc = RangeEncoder::new();
        for (i, &s) in symbols.iter().enumerate() {
            let t = &self.tables[i % self.tables.len()];
            match t.index_of(s) {
                Some(idx) => enc.encode(t.cum(idx), t.freqs[idx], PRECISION),
                None => {
                    let esc = t.escape_index();
                    enc.encode(t.cum(esc), t.freqs[esc], PRECISION);
                    let v = i32::try_from(s).map_err(|_| {
                        Error::Bitstream(format!("latent value {s} exceeds the i32 escape range"))
                    })?;
                    let zz = ((v << 1) ^ (v >> 31)) as u32;
                    for byte in zz.to_be_bytes() {
                        enc.encode(u32::from(byte), 1, 8);
                    }
                }
            }
        }
        Ok(enc.finish())
    }

    pub fn decode_payload(&self, payload: &[u8], count: usize) -> Result<Vec<i64>> {
        if self.tables.is_empty() {
            return Err(Error::Contract("no coding tables".into()));
        }
        let mut dec = RangeDecoder::new(payload)?;
        let mut out = Vec::with_capacity(count);
        for i in 0..count {
            let t = &self.tables[i % self.tables.len()];
            let target = dec.peek(PRECISION)?;
            let mut cum = 0;
            let mut idx = 0;
            while cum + t.freqs[idx] <= target {
                cum += t.freqs[idx];
                idx += 1;
            }
            dec.consume(cum, t.freqs[idx], PRECISION);
            if idx == t.escape_index() {
                let mut zz = 0u32;
                for _ in 0..4 {
                    let b = dec.peek(8)?;
                    dec.consume(b, 1, 8);
                    zz = (zz << 8) | b;
                }
                let v = ((zz >> 1) as i32) ^ -((zz & 1) as i32);
                out.push(i64::from(v));
            } else {
                out.push(t.offset + idx as i64);
            }
        }
        Ok(out)
    }
}

/// An entropy-coded integer latent with its self-describing header.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Bitstream {
    pub latent_len: u32,
    pub table_id: u32,
    pub payload: Vec<u8>,
}

impl Bitstream {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + self.payload.len());
        out.extend_from_slice(&MAGIC);
        out.push(VERSION);
        out.extend_from_slice(&self.latent_len.to_le_bytes());
        out.extend_from_slice(&self.table_id.to_le_bytes());
        out.extend_from_slice(&(self.payload.len() as u32).to_le_bytes());
        out.extend_from_slice(&self.payload);
        out
    }

    /// Parses one bitstream from the front of `bytes`, returning it and the
    /// number of bytes consumed.
    pub fn from_bytes(bytes: &[u8]) -> Result<(Self, usize)> {
        if bytes.len() < HEADER_LEN {
            return Err(Error::Bitstream("truncated header".into()));
        }
        if bytes[..4] != MAGIC {
            return Err(Error::Bitstream("bad magic".into()));
        }
        if bytes[4] != VERSION {
            return Err(Error::Bitstream(format!("unsupported version {}", bytes[4])));
        }
        let word = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap());
        let latent_len = word(5);
        let table_id = word(9);
        let len = word(13) as usize;
        let end = HEADER_LEN + len;
        if bytes.len() < end {
            return Err(Error::Bitstream("truncated payload".into()));
        }
        Ok((
            Bitstream {
                latent_len,
                table_id,
                payload: bytes[HEADER_LEN..end].to_vec(),
            },
            end,
        ))
    }

    pub fn len_bytes(&self) -> usize {
        HEADER_LEN + self.payload.len()
    }
}

/// Entropy-codes an integer latent.
pub fn compress(symbols: &[i64], tables: &CodingTables) -> Result<Bitstream> {
    tables.check_len(symbols.len())?;
    Ok(Bitstream {
        latent_len: symbols.len() as u32,
        table_id: tables.id(),
        payload: tables.encode_payload(symbols)?,
    })
}

pub fn decompress(stream: &Bitstream, tables: &CodingTables) -> Result<Vec<i64>> {
    if stream.table_id != tables.id() {
        return Err(Error::Bitstream(format!(
            "stream was coded with table set {:08x}, got {:08x}",
            stream.table_id,
            tables.id()
        )));
    }
    tables.check_len(stream.latent_len as usize)?;
    tables.decode_payload(&stream.payload, stream.latent_len as usize)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::RngState;

    fn geometric_table(offset: i64, n: usize) -> PmfTable {
        let raw: Vec<f64> = (0..n).map(|i| 0.6f64.powi(i as i32)).collect();
        let s: f64 = raw.iter().sum();
        let probs: Vec<f64> = raw.iter().map(|p| p / s * 0.999).collect();
        PmfTable::from_probabilities(offset, &probs).unwrap()
    }

    #[test]
    fn frequencies_sum_to_total() {
        let t = geometric_table(-3, 9);
        assert_eq!(t.freqs.iter().sum::<u32>(), TOTAL);
        assert!(t.freqs.iter().all(|&f| f >= 1));
        let full = PmfTable::from_probabilities(0, &[0.5, 0.5]).unwrap();
        assert_eq!(full.freqs[2], 1);
    }

    #[test]
    fn round_trip_with_escapes() {
        let tables = CodingTables::new(vec![geometric_table(-2, 6), geometric_table(0, 4)]).unwrap();
        for syms in [vec![0, 1], vec![-2, 3], vec![-100, 7], vec![i64::from(i32::MIN), i64::from(i32::MAX)]] {
            let bs = compress(&syms, &tables).unwrap();
            let bytes = bs.to_bytes();
            let (parsed, used) = Bitstream::from_bytes(&bytes).unwrap();
            assert_eq!(used, bytes.len());
            assert_eq!(decompress(&parsed, &tables).unwrap(), syms);
        }
        assert_eq!(tables.escapes(&[-100, 7]), 2);
    }

    #[test]
    fn rejects_foreign_tables_and_bad_headers() {
        let a = CodingTables::new(vec![geometric_table(0, 5)]).unwrap();
        let b = CodingTables::new(vec![geometric_table(1, 5)]).unwrap();
        let bs = compress(&[2], &a).unwrap();
        assert!(decompress(&bs, &b).is_err());
        let mut bytes = bs.to_bytes();
        bytes[0] = b'X';
        assert!(Bitstream::from_bytes(&bytes).is_err());
        assert!(Bitstream::from_bytes(&bs.to_bytes()[..10]).is_err());
        assert!(compress(&[1, 2], &a).is_err());
    }

    #[test]
    fn degenerate_source_costs_almost_nothing() {
        let t = PmfTable::from_probabilities(0, &[1.0]).unwrap();
        let tables = CodingTables::new(vec![t]).unwrap();
        let syms = vec![0i64; 10_000];
        let payload = tables.encode_payload(&syms).unwrap();
        assert!(payload.len() < 16, "{} bytes", payload.len());
        assert_eq!(tables.decode_payload(&payload, syms.len()).unwrap(), syms);
    }

    #[test]
    fn random_in_support_round_trip() {
        let tables = CodingTables::new((0..8).map(|i| geometric_table(-i, 12)).collect()).unwrap();
        let mut rng = RngState::new(3);
        let syms: Vec<i64> = (0..10_000).map(|i| rng.below(12) as i64 - (i % 8) as i64).collect();
        let payload = tables.encode_payload(&syms).unwrap();
        assert_eq!(tables.decode_payload(&payload, syms.len()).unwrap(), syms);
    }
}
