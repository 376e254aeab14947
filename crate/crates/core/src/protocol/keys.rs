use serde::{Deserialize, Serialize};

use crate::bits::BitString;
use crate::error::{Error, Result};

/// One contiguous consumption from a key buffer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeySpan {
    pub offset: usize,
    pub len: usize,
    pub frame_id: u64,
}

/// Append-only pool of pad bits consumed strictly front to back.
///
/// Every index is handed out at most once. Consumed ranges stay readable so
/// the trusted relay holding the other end of the channel can decrypt.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct KeyBuffer {
    bits: Vec<bool>,
    consumed: usize,
    spans: Vec<KeySpan>,
}

impl KeyBuffer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_bits(bits: impl IntoIterator<Item = bool>) -> Self {
        let mut b = Self::new();
        b.credit(bits);
        b
    }

    pub fn credit(&mut self, bits: impl IntoIterator<Item = bool>) {
        self.bits.extend(bits);
    }

    pub fn total(&self) -> usize {
        self.bits.len()
    }

    pub fn consumed(&self) -> usize {
        self.consumed
    }

    pub fn available(&self) -> usize {
        self.bits.len() - self.consumed
    }

    pub fn spans(&self) -> &[KeySpan] {
        &self.spans
    }

    /// Takes the next `len` bits, or nothing at all.
    pub fn consume(&mut self, len: usize, frame_id: u64) -> Result<(usize, &[bool])> {
        if len > self.available() {
            return Err(Error::InsufficientKey {
                needed: len,
                available: self.available(),
            });
        }
        let offset = self.consumed;
        self.consumed += len;
        self.spans.push(KeySpan {
            offset,
            len,
            frame_id,
        });
        Ok((offset, &self.bits[offset..offset + len]))
    }

    /// Pad bits of an already consumed range.
    pub fn pad(&self, offset: usize, len: usize) -> Result<&[bool]> {
        let end = offset + len;
        if end > self.consumed {
            return Err(Error::KeyRangeNotConsumed { offset, end });
        }
        Ok(&self.bits[offset..end])
    }
}

/// XORs `plaintext` with the next unused pad bits; returns the ciphertext and
/// the pad offset the receiver needs.
pub fn otp_encrypt(
    plaintext: &BitString,
    buffer: &mut KeyBuffer,
    frame_id: u64,
) -> Result<(BitString, usize)> {
    let (offset, pad) = buffer.consume(plaintext.len(), frame_id)?;
    Ok((plaintext.xor_with(pad)?, offset))
}

pub fn otp_decrypt(ciphertext: &BitString, key_offset: usize, buffer: &KeyBuffer) -> Result<BitString> {
    ciphertext.xor_with(buffer.pad(key_offset, ciphertext.len())?)
}
