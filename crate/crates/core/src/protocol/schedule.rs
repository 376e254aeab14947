use serde::{Deserialize, Serialize};

use super::commit::RELAYS;
use crate::error::{Error, Result};

/// Abstract-time parameters of a session.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimingConfig {
    /// Time units between consecutive frame completions.
    pub frame_duration: u64,
    /// Transit time Alice -> P0 and Alice -> P1.
    pub latency: [u64; RELAYS],
    /// How long each relay holds a message before decrypting it.
    pub wait: [u64; RELAYS],
}

impl Default for TimingConfig {
    fn default() -> Self {
        // latency + wait equal on both channels, so both relays finish together
        Self {
            frame_duration: 10,
            latency: [2, 3],
            wait: [4, 3],
        }
    }
}

impl TimingConfig {
    /// Waits chosen so that every channel completes exactly `horizon` after
    /// sending.
    pub fn aligned(frame_duration: u64, latency: [u64; RELAYS], horizon: u64) -> Result<Self> {
        let mut wait = [0; RELAYS];
        for (w, &l) in wait.iter_mut().zip(&latency) {
            *w = horizon.checked_sub(l).ok_or_else(|| Error::InvalidParam {
                name: "horizon",
                reason: format!("horizon {horizon} is shorter than latency {l}"),
            })?;
        }
        Ok(Self {
            frame_duration,
            latency,
            wait,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.frame_duration == 0 {
            return Err(Error::InvalidParam {
                name: "timing.frame_duration",
                reason: "must be positive".into(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChannelTiming {
    pub sent_at: u64,
    pub received_at: u64,
    pub wait: u64,
    pub decrypt_at: u64,
}

/// When each relay may decrypt and when everyone unveils.
///
/// `epoch` is the latest channel completion, so every relay has decrypted by
/// then and all unveilings for the frame happen at that single instant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnveilSchedule {
    pub channels: [ChannelTiming; RELAYS],
    pub epoch: u64,
}

impl UnveilSchedule {
    pub fn plan(sent_at: u64, timing: &TimingConfig) -> Self {
        let channels = std::array::from_fn(|i| {
            let received_at = sent_at + timing.latency[i];
            ChannelTiming {
                sent_at,
                received_at,
                wait: timing.wait[i],
                decrypt_at: received_at + timing.wait[i],
            }
        });
        let epoch = channels.iter().map(|c: &ChannelTiming| c.decrypt_at).max().unwrap_or(sent_at);
        Self { channels, epoch }
    }

    pub fn is_consistent(&self) -> bool {
        self.channels.iter().all(|c| {
            c.received_at >= c.sent_at
                && c.decrypt_at >= c.received_at + c.wait
                && self.epoch >= c.sent_at + c.wait
                && self.epoch >= c.decrypt_at
        })
    }
}
