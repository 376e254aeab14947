//! Commit, unveil and verify among Alice, the relays P0/P1 and Bob.
//!
//! Alice commits inside a BB84 frame whose basis choices split 2N/2N and
//! whose outcomes in the bit-selected basis form a codeword. The payload is
//! one-time-pad encrypted separately towards each relay, with key drawn from
//! that channel's [`KeyBuffer`]. Relays decrypt after their waiting time, all
//! unveilings happen at one epoch, and Bob checks relay agreement and the
//! disclosed bases against what he sent.

mod cheat;
mod commit;
mod keys;
mod schedule;
mod session;
mod verify;

pub use cheat::{simulate_cheating_alice, CheatStrategy, CheatingReport};
pub use commit::{
    decode_payload, encode_payload, try_commit, CommitMessage, DecodedPayload, PayloadMode,
    RELAYS,
};
pub use keys::{otp_decrypt, otp_encrypt, KeyBuffer, KeySpan};
pub use schedule::{ChannelTiming, TimingConfig, UnveilSchedule};
pub use session::{
    run_session, AbortedCommit, AliceStrategy, ChannelLedger, CommitmentRecord, EventRecord,
    FrameStats, SessionConfig, SessionTranscript, SessionVerdict, Tamper,
};
pub use verify::{bob_verify, relay_consistency_check, Thresholds, VerificationCounts, Verdict};
