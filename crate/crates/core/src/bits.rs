//! Owned bit strings and their packed wire format.
//!
//! Wire format: a `u32` little-endian bit count followed by `ceil(len/8)`
//! bytes. Bit `i` of the sequence lives in byte `i / 8` at position `i % 8`
//! (least significant bit first). Unused high bits of the last byte are zero.
//! In JSON a [`BitString`] is the lowercase hex of that byte string.

use std::fmt;
use std::ops::{BitXor, Index};
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

#[derive(Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BitString(Vec<bool>);

impl BitString {
    pub fn new() -> Self {
        Self(Vec::new())
    }

    pub fn zeros(len: usize) -> Self {
        Self(vec![false; len])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.0
    }

    pub fn push(&mut self, bit: bool) {
        self.0.push(bit);
    }

    pub fn count_ones(&self) -> usize {
        self.0.iter().filter(|&&b| b).count()
    }

    pub fn iter(&self) -> impl Iterator<Item = bool> + '_ {
        self.0.iter().copied()
    }

    /// Flips bit `i` in place. Panics when out of range.
    pub fn flip(&mut self, i: usize) {
        self.0[i] = !self.0[i];
    }

    /// XOR with a key slice of equal length.
    pub fn xor_with(&self, key: &[bool]) -> Result<BitString> {
        if key.len() != self.len() {
            return Err(Error::WrongLength {
                expected: self.len(),
                got: key.len(),
            });
        }
        Ok(self.0.iter().zip(key).map(|(a, b)| a ^ b).collect())
    }

    /// Big-endian unsigned value of the first `width` bits, used for
    /// fixed-width integer fields inside payloads.
    pub fn from_uint(value: &num_bigint::BigUint, width: usize) -> Self {
        (0..width)
            .map(|i| value.bit((width - 1 - i) as u64))
            .collect()
    }

    pub fn to_uint(&self) -> num_bigint::BigUint {
        let mut v = num_bigint::BigUint::default();
        for b in self.iter() {
            v <<= 1u32;
            if b {
                v += 1u32;
            }
        }
        v
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let len = u32::try_from(self.len()).expect("bit string longer than u32::MAX bits");
        let mut out = Vec::with_capacity(4 + self.len().div_ceil(8));
        out.extend_from_slice(&len.to_le_bytes());
        for chunk in self.0.chunks(8) {
            let byte = chunk
                .iter()
                .enumerate()
                .fold(0u8, |acc, (i, &b)| acc | ((b as u8) << i));
            out.push(byte);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (prefix, body) = bytes
            .split_first_chunk::<4>()
            .ok_or_else(|| Error::MalformedBits("missing length prefix".into()))?;
        let len = u32::from_le_bytes(*prefix) as usize;
        if body.len() != len.div_ceil(8) {
            return Err(Error::MalformedBits(format!(
                "{len} bits need {} bytes, found {}",
                len.div_ceil(8),
                body.len()
            )));
        }
        let bits: Vec<bool> = (0..len).map(|i| body[i / 8] >> (i % 8) & 1 == 1).collect();
        if !len.is_multiple_of(8) && body[len / 8] >> (len % 8) != 0 {
            return Err(Error::MalformedBits("non-zero padding bits".into()));
        }
        Ok(Self(bits))
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.to_bytes())
    }

    pub fn from_hex(s: &str) -> Result<Self> {
        let bytes = hex::decode(s).map_err(|e| Error::MalformedBits(e.to_string()))?;
        Self::from_bytes(&bytes)
    }
}

impl From<Vec<bool>> for BitString {
    fn from(v: Vec<bool>) -> Self {
        Self(v)
    }
}

impl From<&[bool]> for BitString {
    fn from(v: &[bool]) -> Self {
        Self(v.to_vec())
    }
}

impl From<BitString> for Vec<bool> {
    fn from(b: BitString) -> Self {
        b.0
    }
}

impl FromIterator<bool> for BitString {
    fn from_iter<I: IntoIterator<Item = bool>>(iter: I) -> Self {
        Self(iter.into_iter().collect())
    }
}

impl Index<usize> for BitString {
    type Output = bool;

    fn index(&self, i: usize) -> &bool {
        &self.0[i]
    }
}

impl BitXor for &BitString {
    type Output = BitString;

    fn bitxor(self, rhs: &BitString) -> BitString {
        assert_eq!(self.len(), rhs.len(), "xor of unequal-length bit strings");
        self.0.iter().zip(&rhs.0).map(|(a, b)| a ^ b).collect()
    }
}

impl FromStr for BitString {
    type Err = Error;

    /// Parses `"0110"`-style strings.
    fn from_str(s: &str) -> Result<Self> {
        s.chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(Error::MalformedBits(format!("unexpected character {other:?}"))),
            })
            .collect()
    }
}

impl fmt::Display for BitString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &b in &self.0 {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl fmt::Debug for BitString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BitString({self})")
    }
}

impl Serialize for BitString {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for BitString {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        BitString::from_hex(&s).map_err(serde::de::Error::custom)
    }
}
