//! Monte Carlo estimate of how often a dishonest Alice gets each bit
//! accepted for the same commitment.

use serde::{Deserialize, Serialize};

use super::session::{run_session, AliceStrategy, SessionConfig};
use super::verify::Verdict;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheatStrategy {
    /// Unveil the committed bit honestly.
    Honest,
    /// Also try to open the other bit by disclosing every basis flipped.
    #[default]
    ClaimOtherBasis,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheatingReport {
    pub strategy: CheatStrategy,
    pub trials: u64,
    /// Trials in which a commitment frame occurred.
    pub committed_trials: u64,
    pub committed_bit: u8,
    pub accepts_0: u64,
    pub accepts_1: u64,
    /// Empirical P(Bob accepts 0) over committed trials.
    pub p0_hat: f64,
    pub p1_hat: f64,
}

impl CheatingReport {
    pub fn sum(&self) -> f64 {
        self.p0_hat + self.p1_hat
    }
}

/// Runs `trials` sessions with seeds `config.seed + t`. Every session
/// commits `config.commit_bit` once; Alice then unveils it honestly and,
/// under [`CheatStrategy::ClaimOtherBasis`], separately tries to unveil
/// the other bit from the identical session state.
pub fn simulate_cheating_alice(
    strategy: CheatStrategy,
    config: &SessionConfig,
    trials: u64,
) -> Result<CheatingReport> {
    if trials == 0 {
        return Err(Error::NoTrials);
    }
    let committed_bit = config.commit_bit;
    let mut accepts = [0u64; 2];
    let mut committed_trials = 0;
    for t in 0..trials {
        let honest = SessionConfig {
            seed: config.seed.wrapping_add(t),
            max_commitments: 1,
            alice_strategy: AliceStrategy::Honest,
            tamper: None,
            export_frames: false,
            ..config.clone()
        };
        let run = run_session(&honest)?;
        let Some(c) = run.commitments.first() else {
            continue;
        };
        committed_trials += 1;
        if let Some(b) = c.verdict.accepted_bit() {
            accepts[usize::from(b)] += 1;
        }
        if strategy == CheatStrategy::ClaimOtherBasis {
            let cheat = SessionConfig {
                alice_strategy: AliceStrategy::ClaimOtherBasis,
                ..honest
            };
            let run = run_session(&cheat)?;
            let v = run.commitments.first().map_or(Verdict::Reject, |c| c.verdict);
            // only an acceptance of the bit she did not commit counts here
            if v.accepted_bit() == Some(committed_bit == 0) {
                accepts[usize::from(committed_bit == 0)] += 1;
            }
        }
    }
    let frac = |k: u64| {
        if committed_trials == 0 {
            0.0
        } else {
            k as f64 / committed_trials as f64
        }
    };
    Ok(CheatingReport {
        strategy,
        trials,
        committed_trials,
        committed_bit,
        accepts_0: accepts[0],
        accepts_1: accepts[1],
        p0_hat: frac(accepts[0]),
        p1_hat: frac(accepts[1]),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_trials_is_an_error() {
        assert_eq!(
            simulate_cheating_alice(CheatStrategy::Honest, &SessionConfig::small(0), 0),
            Err(Error::NoTrials)
        );
    }

    #[test]
    fn honest_strategy_never_opens_other_bit() {
        let cfg = SessionConfig {
            frame_budget: 200,
            ..SessionConfig::small(10)
        };
        let r = simulate_cheating_alice(CheatStrategy::Honest, &cfg, 30).unwrap();
        assert_eq!(r.accepts_1, 0);
        assert!(r.committed_trials > 0);
    }
}
