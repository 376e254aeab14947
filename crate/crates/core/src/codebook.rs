//! Balanced-sequence codebooks.
//!
//! A codebook of size `x` admits the first `x` balanced 2N-bit strings
//! (N zeros, N ones) in lexicographic order, most significant bit first.
//! Ranking uses the combinatorial number system, so both parties derive the
//! same codebook from `(N, x)` alone.

use num_bigint::BigUint;
use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};

use crate::bits::BitString;
use crate::error::{Error, Result};

/// Exact binomial coefficient.
pub fn binom(n: u64, k: u64) -> BigUint {
    if k > n {
        return BigUint::zero();
    }
    let k = k.min(n - k);
    let mut acc = BigUint::one();
    for i in 0..k {
        acc *= n - i;
        acc /= i + 1;
    }
    acc
}

/// Number of balanced 2N-bit strings, C(2N, N).
pub fn codebook_capacity(n_half: u32) -> BigUint {
    binom(2 * u64::from(n_half), u64::from(n_half))
}

// Balanced completions of `zeros` zeros and `ones` ones whose next bit is 0.
fn completions_starting_with_zero(zeros: u64, ones: u64) -> BigUint {
    if zeros == 0 {
        BigUint::zero()
    } else {
        binom(zeros - 1 + ones, ones)
    }
}

/// Lexicographic rank of a balanced sequence among all balanced sequences of
/// its length.
pub fn rank(seq: &[bool]) -> Result<BigUint> {
    if !seq.len().is_multiple_of(2) {
        return Err(Error::WrongLength {
            expected: seq.len() + 1,
            got: seq.len(),
        });
    }
    let ones = seq.iter().filter(|&&b| b).count();
    let zeros = seq.len() - ones;
    if ones != zeros {
        return Err(Error::Unbalanced { zeros, ones });
    }

    let (mut z, mut o) = (zeros as u64, ones as u64);
    let mut r = BigUint::zero();
    for &bit in seq {
        if bit {
            r += completions_starting_with_zero(z, o);
            o -= 1;
        } else {
            z -= 1;
        }
    }
    Ok(r)
}

/// Inverse of [`rank`].
pub fn unrank(n_half: u32, index: &BigUint) -> Result<BitString> {
    let capacity = codebook_capacity(n_half);
    if *index >= capacity {
        return Err(Error::RankOutOfRange {
            index: index.to_string(),
            capacity: capacity.to_string(),
        });
    }
    let (mut z, mut o) = (u64::from(n_half), u64::from(n_half));
    let mut rem = index.clone();
    let mut out = BitString::new();
    while z + o > 0 {
        let c = completions_starting_with_zero(z, o);
        if rem < c {
            out.push(false);
            z -= 1;
        } else {
            rem -= c;
            out.push(true);
            o -= 1;
        }
    }
    Ok(out)
}

/// The first `x` balanced strings of length 2N.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "CodebookDoc")]
pub struct Codebook {
    n_half: u32,
    #[serde(with = "crate::codebook::big_decimal")]
    x: BigUint,
}

#[derive(Deserialize)]
struct CodebookDoc {
    n_half: u32,
    #[serde(with = "crate::codebook::big_decimal")]
    x: BigUint,
}

impl TryFrom<CodebookDoc> for Codebook {
    type Error = Error;

    fn try_from(doc: CodebookDoc) -> Result<Self> {
        Codebook::new(doc.n_half, doc.x)
    }
}

impl Codebook {
    pub fn new(n_half: u32, x: BigUint) -> Result<Self> {
        if n_half == 0 {
            return Err(Error::InvalidParam {
                name: "n_half",
                reason: "must be at least 1".into(),
            });
        }
        let capacity = codebook_capacity(n_half);
        if x > capacity {
            return Err(Error::CodebookTooLarge {
                x: x.to_string(),
                capacity: capacity.to_string(),
            });
        }
        Ok(Self { n_half, x })
    }

    /// A codebook admitting every balanced string.
    pub fn full(n_half: u32) -> Result<Self> {
        Self::new(n_half, codebook_capacity(n_half))
    }

    pub fn n_half(&self) -> u32 {
        self.n_half
    }

    pub fn size(&self) -> &BigUint {
        &self.x
    }

    pub fn codeword_len(&self) -> usize {
        2 * self.n_half as usize
    }

    pub fn is_codeword(&self, seq: &[bool]) -> Result<bool> {
        if seq.len() != self.codeword_len() {
            return Err(Error::WrongLength {
                expected: self.codeword_len(),
                got: seq.len(),
            });
        }
        match rank(seq) {
            Ok(r) => Ok(r < self.x),
            Err(Error::Unbalanced { .. }) => Ok(false),
            Err(e) => Err(e),
        }
    }

    /// Width of a rank field able to address every codeword: ⌈log2 x⌉.
    pub fn rank_bits(&self) -> usize {
        if self.x <= BigUint::one() {
            0
        } else {
            (&self.x - 1u32).bits() as usize
        }
    }
}

/// Serde helper: `BigUint` as a decimal string, also accepting JSON integers.
pub mod big_decimal {
    use num_bigint::BigUint;
    use serde::de::{self, Visitor};
    use serde::{Deserializer, Serializer};
    use std::fmt;

    pub fn serialize<S: Serializer>(v: &BigUint, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&v.to_str_radix(10))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BigUint, D::Error> {
        struct V;
        impl Visitor<'_> for V {
            type Value = BigUint;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a non-negative integer or decimal string")
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> Result<BigUint, E> {
                Ok(BigUint::from(v))
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> Result<BigUint, E> {
                u64::try_from(v)
                    .map(BigUint::from)
                    .map_err(|_| E::custom("negative integer"))
            }

            fn visit_str<E: de::Error>(self, v: &str) -> Result<BigUint, E> {
                BigUint::parse_bytes(v.as_bytes(), 10)
                    .ok_or_else(|| E::custom(format!("not a decimal integer: {v:?}")))
            }
        }
        d.deserialize_any(V)
    }
}
