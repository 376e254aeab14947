use serde::{Deserialize, Serialize};

use super::commit::{decode_payload, PayloadMode};
use crate::bits::BitString;
use crate::codebook::Codebook;
use crate::error::{Error, Result};
use crate::frames::{Basis, Frame};

/// Bob's acceptance thresholds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    /// Minimum same-basis detections required in each basis.
    pub n_tol: u32,
    /// Tolerated error fraction; errors must not exceed `e_tol * n_tol`.
    pub e_tol: f64,
}

impl Thresholds {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..0.5).contains(&self.e_tol) {
            return Err(Error::Domain {
                name: "e_tol",
                value: self.e_tol,
                domain: "[0, 0.5)",
            });
        }
        Ok(())
    }

    fn max_errors(&self) -> f64 {
        self.e_tol * f64::from(self.n_tol)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerificationCounts {
    pub n_rect: u32,
    pub n_diag: u32,
    pub n_err_rect: u32,
    pub n_err_diag: u32,
}

impl VerificationCounts {
    /// Counts records where the disclosed basis equals the basis Bob sent,
    /// and among those the outcomes that differ from Bob's bit.
    pub fn tally(frame: &Frame, disclosure: &[Basis]) -> Result<Self> {
        if disclosure.len() != frame.records.len() {
            return Err(Error::WrongLength {
                expected: frame.records.len(),
                got: disclosure.len(),
            });
        }
        let mut c = Self::default();
        for (rec, &claimed) in frame.records.iter().zip(disclosure) {
            if claimed != rec.ground_truth.bob_basis {
                continue;
            }
            let wrong = u32::from(rec.outcome != rec.ground_truth.bob_bit);
            match claimed {
                Basis::Rectilinear => {
                    c.n_rect += 1;
                    c.n_err_rect += wrong;
                }
                Basis::Diagonal => {
                    c.n_diag += 1;
                    c.n_err_diag += wrong;
                }
            }
        }
        Ok(c)
    }

    pub fn errors_in(&self, basis: Basis) -> u32 {
        match basis {
            Basis::Rectilinear => self.n_err_rect,
            Basis::Diagonal => self.n_err_diag,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Accept0,
    Accept1,
    Reject,
}

impl Verdict {
    pub fn accepted_bit(self) -> Option<bool> {
        match self {
            Verdict::Accept0 => Some(false),
            Verdict::Accept1 => Some(true),
            Verdict::Reject => None,
        }
    }
}

/// Both relays must hold a payload, and the payloads must agree bit for bit.
pub fn relay_consistency_check(p0: Option<&BitString>, p1: Option<&BitString>) -> Result<bool> {
    match (p0, p1) {
        (Some(a), Some(b)) => Ok(a == b),
        (None, _) => Err(Error::MissingPayload(0)),
        (_, None) => Err(Error::MissingPayload(1)),
    }
}

/// Bob's decision once the relays agree and Alice has disclosed her bases.
///
/// The bit is 0 when the payload equals the outcomes Alice claims to have
/// measured rectilinearly, 1 when it equals her claimed diagonal outcomes.
/// Either way both per-basis counts must reach `n_tol` and the errors in
/// the committed basis must not exceed `e_tol * n_tol`.
pub fn bob_verify(
    frame: &Frame,
    disclosure: &[Basis],
    payload: &BitString,
    counts: &VerificationCounts,
    thresholds: &Thresholds,
    cb: &Codebook,
    mode: PayloadMode,
) -> Result<Verdict> {
    if disclosure.len() != frame.records.len() {
        return Err(Error::WrongLength {
            expected: frame.records.len(),
            got: disclosure.len(),
        });
    }
    let Ok(decoded) = decode_payload(payload, cb, mode) else {
        return Ok(Verdict::Reject);
    };
    if !cb.is_codeword(decoded.codeword.as_slice())? {
        return Ok(Verdict::Reject);
    }
    let enough = counts.n_rect >= thresholds.n_tol && counts.n_diag >= thresholds.n_tol;
    if !enough {
        return Ok(Verdict::Reject);
    }
    for (basis, verdict) in [
        (Basis::Rectilinear, Verdict::Accept0),
        (Basis::Diagonal, Verdict::Accept1),
    ] {
        if decoded.basis.is_some_and(|b| b != basis) {
            continue;
        }
        let claimed: BitString = frame
            .records
            .iter()
            .zip(disclosure)
            .filter(|(_, &d)| d == basis)
            .map(|(r, _)| r.outcome)
            .collect();
        if claimed == decoded.codeword && f64::from(counts.errors_in(basis)) <= thresholds.max_errors() {
            return Ok(verdict);
        }
    }
    Ok(Verdict::Reject)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frames::{GroundTruth, MeasurementRecord};
    use num_bigint::BigUint;

    use Basis::{Diagonal as D, Rectilinear as R};

    // (alice basis, bob basis, outcome, bob bit)
    fn frame(rows: &[(Basis, Basis, u8, u8)]) -> Frame {
        let recs = rows
            .iter()
            .enumerate()
            .map(|(i, &(a, b, o, t))| MeasurementRecord {
                index: i as u64,
                alice_basis: a,
                outcome: o == 1,
                ground_truth: GroundTruth {
                    bob_basis: b,
                    bob_bit: t == 1,
                },
            })
            .collect();
        Frame::new(0, recs)
    }

    fn honest_frame() -> Frame {
        frame(&[
            (R, R, 0, 0),
            (R, R, 1, 1),
            (R, D, 1, 0),
            (R, R, 0, 0),
            (D, D, 1, 1),
            (D, D, 0, 0),
            (D, R, 1, 1),
            (D, D, 0, 0),
        ])
    }

    fn cb() -> Codebook {
        Codebook::new(2, BigUint::from(6u32)).unwrap()
    }

    fn th(n_tol: u32, e_tol: f64) -> Thresholds {
        Thresholds { n_tol, e_tol }
    }

    fn verify(f: &Frame, disclosure: &[Basis], payload: &str, t: Thresholds) -> Verdict {
        let counts = VerificationCounts::tally(f, disclosure).unwrap();
        bob_verify(f, disclosure, &payload.parse().unwrap(), &counts, &t, &cb(), PayloadMode::Raw).unwrap()
    }

    #[test]
    fn consistency_check() {
        let a: BitString = "0110".parse().unwrap();
        let b: BitString = "0111".parse().unwrap();
        assert!(relay_consistency_check(Some(&a), Some(&a)).unwrap());
        assert!(!relay_consistency_check(Some(&a), Some(&b)).unwrap());
        assert_eq!(relay_consistency_check(Some(&a), None), Err(Error::MissingPayload(1)));
        assert_eq!(relay_consistency_check(None, Some(&a)), Err(Error::MissingPayload(0)));
    }

    #[test]
    fn tally_counts_same_basis_only() {
        let f = honest_frame();
        let c = VerificationCounts::tally(&f, &f.alice_bases()).unwrap();
        assert_eq!(c, VerificationCounts { n_rect: 3, n_diag: 3, n_err_rect: 0, n_err_diag: 0 });
        assert!(VerificationCounts::tally(&f, &[R]).is_err());
    }

    #[test]
    fn honest_noiseless_accepts() {
        let f = honest_frame();
        assert_eq!(verify(&f, &f.alice_bases(), "0110", th(3, 0.0)), Verdict::Accept0);
        assert_eq!(verify(&f, &f.alice_bases(), "1010", th(2, 0.25)), Verdict::Accept1);
    }

    #[test]
    fn count_threshold_rejects() {
        let f = honest_frame();
        assert_eq!(verify(&f, &f.alice_bases(), "0110", th(4, 0.0)), Verdict::Reject);
    }

    #[test]
    fn error_threshold_rejects() {
        // floor(0.25 * 4) + 1 = 2 rectilinear errors against Bob's bits.
        let f = frame(&[
            (R, R, 0, 1),
            (R, R, 1, 0),
            (R, R, 1, 1),
            (R, R, 0, 0),
            (D, D, 1, 1),
            (D, D, 0, 0),
            (D, D, 1, 1),
            (D, D, 0, 0),
        ]);
        assert_eq!(verify(&f, &f.alice_bases(), "0110", th(4, 0.25)), Verdict::Reject);
        // one error is within floor(0.25 * 4) = 1
        let mut g = f.clone();
        g.records[0].ground_truth.bob_bit = false;
        assert_eq!(verify(&g, &g.alice_bases(), "0110", th(4, 0.25)), Verdict::Accept0);
    }

    #[test]
    fn payload_must_match_disclosed_substring() {
        let f = honest_frame();
        assert_eq!(verify(&f, &f.alice_bases(), "0101", th(2, 0.25)), Verdict::Reject);
        assert_eq!(verify(&f, &f.alice_bases(), "0111", th(2, 0.25)), Verdict::Reject);
    }

    #[test]
    fn swapped_disclosure_is_checked_against_bob_bits() {
        let f = honest_frame();
        let swapped: Vec<Basis> = f.alice_bases().iter().map(|b| b.other()).collect();
        // Claimed diagonal records are the rectilinear ones; the payload
        // matches, but only record 2 is same-basis and it carries an error.
        let c = VerificationCounts::tally(&f, &swapped).unwrap();
        assert_eq!(c, VerificationCounts { n_rect: 1, n_diag: 1, n_err_rect: 0, n_err_diag: 1 });
        assert_eq!(verify(&f, &swapped, "0110", th(1, 0.25)), Verdict::Reject);
    }
}
