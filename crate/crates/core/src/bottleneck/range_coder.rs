//! 32-bit renormalizing range coder with carry propagation.
//!
//! The encoder keeps a 33-bit `low` (the top bit is a pending carry) and a
//! 32-bit `range`; whenever `range` drops below 2^24 one byte is shifted out.
//! Bytes equal to `0xFF` are held back (`cache_size`) until it is known
//! whether a carry will ripple into them. The first emitted byte is always 0.

use crate::error::{Error, Result};

const TOP: u32 = 1 << 24;

pub struct RangeEncoder {
    low: u64,
    range: u32,
    cache: u8,
    cache_size: u64,
    out: Vec<u8>,
}

impl Default for RangeEncoder {
    fn default() -> Self {
        Self::new()
    }
}

impl RangeEncoder {
    pub fn new() -> Self {
        RangeEncoder {
            low: 0,
            range: u32::MAX,
            cache: 0,
            cache_size: 1,
            out: Vec::new(),
        }
    }

    /// Encodes the interval `[cum, cum + freq)` out of `2^total_bits`.
    pub fn encode(&mut self, cum: u32, freq: u32, total_bits: u32) {
        debug_assert!(freq > 0 && cum + freq <= 1 << total_bits);
        let r = self.range >> total_bits;
        self.low += u64::from(r) * u64::from(cum);
        self.range = r * freq;
        while self.range < TOP {
            self.range <<= 8;
            self.shift_low();
        }
    }

    fn shift_low(&mut self) {
        if self.low < 0xFF00_0000 || self.low >= 1 << 32 {
            let carry = (self.low >> 32) as u8;
            let mut temp = self.cache;
            loop {
                self.out.push(temp.wrapping_add(carry));
                temp = 0xFF;
                self.cache_size -= 1;
                if self.cache_size == 0 {
                    break;
                }
            }
            self.cache = ((self.low >> 24) & 0xFF) as u8;
        }
        self.cache_size += 1;
        self.low = (self.low & 0x00FF_FFFF) << 8;
    }

    pub fn finish(mut self) -> Vec<u8> {
        for _ in 0..5 {
            self.shift_low();
        }
        self.out
    }
}

pub struct RangeDecoder<'a> {
    code: u32,
    range: u32,
    input: &'a [u8],
    pos: usize,
}

impl<'a> RangeDecoder<'a> {
    pub fn new(input: &'a [u8]) -> Result<Self> {
        if input.len() < 5 {
            return Err(Error::Bitstream("range-coded payload shorter than 5 bytes".into()));
        }
        let mut d = RangeDecoder {
            code: 0,
            range: u32::MAX,
            input,
            pos: 0,
        };
        for _ in 0..5 {
            d.code = (d.code << 8) | u32::from(d.next_byte());
        }
        Ok(d)
    }

    fn next_byte(&mut self) -> u8 {
        // reading past the end yields zeros, mirroring the encoder's flush
        let b = self.input.get(self.pos).copied().unwrap_or(0);
        self.pos += 1;
        b
    }

    /// Returns the target value in `[0, 2^total_bits)`; follow with
    /// [`RangeDecoder::consume`] for the symbol whose interval contains it.
    pub fn peek(&mut self, total_bits: u32) -> Result<u32> {
        let r = self.range >> total_bits;
        let v = self.code / r;
        if v >= 1 << total_bits {
            return Err(Error::Bitstream("corrupt range-coded payload".into()));
        }
        Ok(v)
    }

    pub fn consume(&mut self, cum: u32, freq: u32, total_bits: u32) {
        let r = self.range >> total_bits;
        self.code -= r * cum;
        self.range = r * freq;
        while self.range < TOP {
            self.range <<= 8;
            self.code = (self.code << 8) | u32::from(self.next_byte());
        }
    }
}
