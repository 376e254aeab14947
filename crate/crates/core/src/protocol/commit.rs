use num_bigint::BigUint;
use serde::{Deserialize, Serialize};

use super::keys::{otp_encrypt, KeyBuffer};
use crate::bits::BitString;
use crate::codebook::{unrank, Codebook};
use crate::error::{Error, Result};
use crate::frames::{Basis, Frame};

/// Number of relays receiving a copy of each commitment.
pub const RELAYS: usize = 2;

/// How the committed substring is carried.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PayloadMode {
    /// The 2N outcome bits as measured.
    #[default]
    Raw,
    /// The codeword's rank in ⌈log2 x⌉ bits followed by one basis bit
    /// (0 rectilinear, 1 diagonal).
    Compressed,
}

impl PayloadMode {
    pub fn payload_len(self, cb: &Codebook) -> usize {
        match self {
            PayloadMode::Raw => cb.codeword_len(),
            PayloadMode::Compressed => cb.rank_bits() + 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommitMessage {
    pub frame_id: u64,
    pub relay: usize,
    /// Hex of the packed wire format in JSON.
    pub payload_ciphertext: BitString,
    pub ciphertext_bits: usize,
    pub key_offset: usize,
}

/// Payload for committing `bit` with the codeword `substring`.
pub fn encode_payload(
    substring: &BitString,
    bit: bool,
    cb: &Codebook,
    mode: PayloadMode,
) -> Result<BitString> {
    match mode {
        PayloadMode::Raw => Ok(substring.clone()),
        PayloadMode::Compressed => {
            let r = crate::codebook::rank(substring.as_slice())?;
            let mut out = BitString::from_uint(&r, cb.rank_bits());
            out.push(bit);
            Ok(out)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecodedPayload {
    pub codeword: BitString,
    /// Only the compressed form names the basis explicitly.
    pub basis: Option<Basis>,
}

pub fn decode_payload(payload: &BitString, cb: &Codebook, mode: PayloadMode) -> Result<DecodedPayload> {
    let expected = mode.payload_len(cb);
    if payload.len() != expected {
        return Err(Error::WrongLength {
            expected,
            got: payload.len(),
        });
    }
    match mode {
        PayloadMode::Raw => Ok(DecodedPayload {
            codeword: payload.clone(),
            basis: None,
        }),
        PayloadMode::Compressed => {
            let w = cb.rank_bits();
            let r: BigUint = BitString::from(&payload.as_slice()[..w]).to_uint();
            if r >= *cb.size() {
                return Err(Error::RankOutOfRange {
                    index: r.to_string(),
                    capacity: cb.size().to_string(),
                });
            }
            Ok(DecodedPayload {
                codeword: unrank(cb.n_half(), &r)?,
                basis: Some(Basis::for_bit(payload[w])),
            })
        }
    }
}

/// Attempts to commit `bit` in `frame`.
///
/// Returns `None` when the outcomes in the bit's basis are not a codeword;
/// the frame then goes back to ordinary key generation. On success one
/// independently padded message per relay is produced, and key is drawn
/// from both buffers only if both can cover the payload.
pub fn try_commit(
    frame: &Frame,
    bit: bool,
    cb: &Codebook,
    mode: PayloadMode,
    buffers: &mut [KeyBuffer; RELAYS],
) -> Result<Option<[CommitMessage; RELAYS]>> {
    if !frame.is_candidate() {
        return Err(Error::NotCommitmentFrame(frame.id));
    }
    let substring = frame.outcomes_in(Basis::for_bit(bit));
    if !cb.is_codeword(substring.as_slice())? {
        return Ok(None);
    }
    let payload = encode_payload(&substring, bit, cb, mode)?;
    if let Some(short) = buffers.iter().find(|b| b.available() < payload.len()) {
        return Err(Error::InsufficientKey {
            needed: payload.len(),
            available: short.available(),
        });
    }
    let mut seal = |relay: usize| -> Result<CommitMessage> {
        let (ct, key_offset) = otp_encrypt(&payload, &mut buffers[relay], frame.id)?;
        Ok(CommitMessage {
            frame_id: frame.id,
            relay,
            ciphertext_bits: ct.len(),
            payload_ciphertext: ct,
            key_offset,
        })
    };
    Ok(Some([seal(0)?, seal(1)?]))
}
