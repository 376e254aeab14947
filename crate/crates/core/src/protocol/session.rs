//! End-to-end session: BB84 frames feed per-channel key buffers, the first
//! eligible frame carries the commitment, relays decrypt after their waits,
//! and Bob rules at the unveil epoch.
//!
//! The session is a single-threaded discrete-event loop. Events are ordered
//! by `(time, phase, sequence)`; `phase` makes deliveries and decryptions at
//! an instant happen before an unveiling at the same instant.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap};

use num_bigint::BigUint;
use serde::{Deserialize, Serialize};

use super::commit::{try_commit, CommitMessage, PayloadMode, RELAYS};
use super::keys::{otp_decrypt, KeyBuffer, KeySpan};
use super::schedule::{TimingConfig, UnveilSchedule};
use super::verify::{bob_verify, relay_consistency_check, Thresholds, VerificationCounts, Verdict};
use crate::bits::BitString;
use crate::codebook::{codebook_capacity, Codebook};
use crate::error::{Error, Result};
use crate::frames::{Basis, ChannelModel, Distiller, Frame, FrameClass, FrameStream};
use crate::math::{commit_probability, RateParams, EC_EFFICIENCY};

/// How Alice behaves at unveiling.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AliceStrategy {
    #[default]
    Honest,
    /// Disclose every basis flipped, so the committed substring poses as the
    /// other basis' outcomes and the frame argues for the other bit.
    ClaimOtherBasis,
}

/// Fault injection: flip one ciphertext bit on its way to a relay.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tamper {
    pub relay: usize,
    pub bit: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SessionConfig {
    /// N; frames hold 4N detections.
    pub n_quarter: u32,
    /// Codebook size x; `null` admits every balanced string.
    #[serde(with = "opt_big_decimal")]
    pub codebook_size: Option<BigUint>,
    pub channel: ChannelModel,
    /// Error tolerance used to credit distilled key.
    pub q_tol: f64,
    pub f_ec: f64,
    pub seed: u64,
    pub n_tol: u32,
    pub e_tol: f64,
    pub commit_bit: u8,
    pub frame_budget: u64,
    pub max_commitments: u32,
    pub payload_mode: PayloadMode,
    pub timing: TimingConfig,
    pub alice_strategy: AliceStrategy,
    pub tamper: Option<Tamper>,
    /// Include every frame with its records in the transcript.
    pub export_frames: bool,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            n_quarter: 100,
            codebook_size: None,
            channel: ChannelModel::noiseless(),
            q_tol: 0.0,
            f_ec: EC_EFFICIENCY,
            seed: 0,
            n_tol: 80,
            e_tol: 0.05,
            commit_bit: 0,
            frame_budget: 5000,
            max_commitments: 1,
            payload_mode: PayloadMode::Raw,
            timing: TimingConfig::default(),
            alice_strategy: AliceStrategy::Honest,
            tamper: None,
            export_frames: false,
        }
    }
}

impl SessionConfig {
    /// Small-frame configuration: N = 2 with the full six-word codebook.
    pub fn small(seed: u64) -> Self {
        Self {
            n_quarter: 2,
            codebook_size: Some(BigUint::from(6u32)),
            n_tol: 2,
            e_tol: 0.25,
            frame_budget: 1000,
            seed,
            ..Self::default()
        }
    }

    pub fn codebook(&self) -> Result<Codebook> {
        let x = self
            .codebook_size
            .clone()
            .unwrap_or_else(|| codebook_capacity(self.n_quarter));
        Codebook::new(self.n_quarter, x)
    }

    pub fn thresholds(&self) -> Thresholds {
        Thresholds {
            n_tol: self.n_tol,
            e_tol: self.e_tol,
        }
    }

    pub fn rate_params(&self) -> Result<RateParams> {
        RateParams::new(self.n_quarter.max(1), self.q_tol, 0.0, 0.5, 0.5, self.f_ec)
    }

    pub fn committed_bit(&self) -> bool {
        self.commit_bit == 1
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |name: &'static str, reason: &str| {
            Err(Error::InvalidParam {
                name,
                reason: reason.into(),
            })
        };
        if self.n_quarter == 0 {
            return bad("n_quarter", "must be at least 1");
        }
        if self.commit_bit > 1 {
            return bad("commit_bit", "must be 0 or 1");
        }
        if self.frame_budget == 0 {
            return bad("frame_budget", "must be at least 1");
        }
        if let Some(t) = self.tamper {
            if t.relay >= RELAYS {
                return bad("tamper.relay", "must be 0 or 1");
            }
        }
        self.codebook()?;
        self.rate_params()?;
        self.thresholds().validate()?;
        self.timing.validate()?;
        Ok(())
    }
}

mod opt_big_decimal {
    use num_bigint::BigUint;
    use serde::{Deserialize, Deserializer, Serializer};

    #[derive(Deserialize)]
    struct Wrapped(#[serde(with = "crate::codebook::big_decimal")] BigUint);

    pub fn serialize<S: Serializer>(v: &Option<BigUint>, s: S) -> Result<S::Ok, S::Error> {
        match v {
            Some(x) => crate::codebook::big_decimal::serialize(x, s),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<BigUint>, D::Error> {
        Ok(Option::<Wrapped>::deserialize(d)?.map(|w| w.0))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionVerdict {
    Accept0,
    Accept1,
    Reject,
    NoCommitFrame,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FrameStats {
    pub frames: u64,
    pub pulses_sent: u64,
    pub candidates: u64,
    /// Candidate frames whose outcomes in the commit basis are a codeword.
    pub eligible: u64,
    pub committed: u64,
    pub sifted_bits: u64,
    pub credited_bits: u64,
    pub distill_rate: f64,
}

impl FrameStats {
    pub fn eligible_fraction(&self) -> f64 {
        if self.frames == 0 {
            0.0
        } else {
            self.eligible as f64 / self.frames as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChannelLedger {
    pub relay: usize,
    pub credited: usize,
    pub consumed: usize,
    pub available: usize,
    pub spans: Vec<KeySpan>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AbortedCommit {
    pub frame_id: u64,
    pub needed: usize,
    pub available: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommitmentRecord {
    pub frame_id: u64,
    pub committed_bit: u8,
    pub payload_mode: PayloadMode,
    pub payload_bits: usize,
    /// Messages as Alice sent them.
    pub messages: Vec<CommitMessage>,
    pub tampered: bool,
    pub schedule: UnveilSchedule,
    /// Plaintexts recovered by P0 and P1.
    pub relay_payloads: Vec<Option<BitString>>,
    pub relays_consistent: bool,
    /// Disclosed bases, `R`/`D` per record.
    pub disclosure: String,
    pub counts: Option<VerificationCounts>,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventRecord {
    pub time: u64,
    pub event: String,
    pub frame_id: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub relay: Option<usize>,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionTranscript {
    pub config: SessionConfig,
    pub verdict: SessionVerdict,
    /// Per-frame probability x C(4N,2N) / 2^(6N) for this configuration.
    pub commit_probability: f64,
    pub stats: FrameStats,
    pub key_ledger: Vec<ChannelLedger>,
    pub commitments: Vec<CommitmentRecord>,
    pub aborted: Vec<AbortedCommit>,
    pub events: Vec<EventRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frames: Option<Vec<Frame>>,
}

impl SessionTranscript {
    /// Sum of payload lengths over every message sent.
    pub fn payload_bits_sent(&self) -> usize {
        self.commitments
            .iter()
            .flat_map(|c| &c.messages)
            .map(|m| m.ciphertext_bits)
            .sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Event {
    Deliver { commitment: usize, relay: usize },
    Decrypt { commitment: usize, relay: usize },
    Unveil { commitment: usize },
    FrameDone { index: u64 },
}

impl Event {
    fn phase(&self) -> u8 {
        match self {
            Event::Deliver { .. } => 0,
            Event::Decrypt { .. } => 1,
            Event::Unveil { .. } => 2,
            Event::FrameDone { .. } => 3,
        }
    }
}

#[derive(Debug, Default)]
struct Relay {
    inbox: BTreeMap<usize, CommitMessage>,
    plaintext: BTreeMap<usize, BitString>,
}

struct Session<'a> {
    cfg: &'a SessionConfig,
    codebook: Codebook,
    frames: FrameStream,
    distiller: Distiller,
    buffers: [KeyBuffer; RELAYS],
    next_channel: usize,
    relays: [Relay; RELAYS],
    committed_frames: Vec<Frame>,
    commitments: Vec<CommitmentRecord>,
    aborted: Vec<AbortedCommit>,
    events: Vec<EventRecord>,
    exported: Vec<Frame>,
    stats: FrameStats,
    queue: BinaryHeap<Reverse<(u64, u8, u64, Event)>>,
    seq: u64,
}

impl<'a> Session<'a> {
    fn new(cfg: &'a SessionConfig) -> Result<Self> {
        cfg.validate()?;
        let distiller = Distiller::new(&cfg.rate_params()?)?;
        let stats = FrameStats {
            distill_rate: distiller.rate(),
            ..FrameStats::default()
        };
        Ok(Self {
            cfg,
            codebook: cfg.codebook()?,
            frames: FrameStream::new(cfg.n_quarter, cfg.channel, cfg.seed),
            distiller,
            buffers: Default::default(),
            next_channel: 0,
            relays: Default::default(),
            committed_frames: Vec::new(),
            commitments: Vec::new(),
            aborted: Vec::new(),
            events: Vec::new(),
            exported: Vec::new(),
            stats,
            queue: BinaryHeap::new(),
            seq: 0,
        })
    }

    fn schedule(&mut self, time: u64, ev: Event) {
        self.queue.push(Reverse((time, ev.phase(), self.seq, ev)));
        self.seq += 1;
    }

    fn log(&mut self, time: u64, event: &str, frame_id: u64, relay: Option<usize>, detail: String) {
        self.events.push(EventRecord {
            time,
            event: event.into(),
            frame_id,
            relay,
            detail,
        });
    }

    fn run(mut self) -> Result<SessionTranscript> {
        self.schedule(self.cfg.timing.frame_duration, Event::FrameDone { index: 0 });
        while let Some(Reverse((time, _, _, ev))) = self.queue.pop() {
            match ev {
                Event::FrameDone { index } => self.on_frame(time, index)?,
                Event::Deliver { commitment, relay } => self.on_deliver(time, commitment, relay),
                Event::Decrypt { commitment, relay } => self.on_decrypt(time, commitment, relay)?,
                Event::Unveil { commitment } => self.on_unveil(time, commitment)?,
            }
        }
        self.finish()
    }

    fn on_frame(&mut self, time: u64, index: u64) -> Result<()> {
        let frame = self
            .frames
            .next()
            .expect("frame stream is unbounded");
        self.stats.frames += 1;
        let bit = self.cfg.committed_bit();
        let mut eligible = false;
        if frame.classification == FrameClass::CommitmentCandidate {
            self.stats.candidates += 1;
            let sub = frame.outcomes_in(Basis::for_bit(bit));
            eligible = self.codebook.is_codeword(sub.as_slice())?;
        }
        if eligible {
            self.stats.eligible += 1;
        }

        let mut committed = false;
        if eligible && self.commitments.len() < self.cfg.max_commitments as usize {
            match try_commit(&frame, bit, &self.codebook, self.cfg.payload_mode, &mut self.buffers) {
                Ok(Some(messages)) => {
                    self.start_commitment(time, &frame, messages);
                    committed = true;
                }
                Ok(None) => {}
                Err(Error::InsufficientKey { needed, available }) => {
                    self.aborted.push(AbortedCommit {
                        frame_id: frame.id,
                        needed,
                        available,
                    });
                    self.log(
                        time,
                        "commit_aborted",
                        frame.id,
                        None,
                        format!("insufficient key: need {needed}, have {available}"),
                    );
                }
                Err(e) => return Err(e),
            }
        }
        if !committed {
            for b in self.distiller.absorb(&frame).iter() {
                self.buffers[self.next_channel].credit([b]);
                self.next_channel = (self.next_channel + 1) % RELAYS;
            }
        }
        if self.cfg.export_frames {
            self.exported.push(frame);
        }
        if index + 1 < self.cfg.frame_budget {
            self.schedule(time + self.cfg.timing.frame_duration, Event::FrameDone { index: index + 1 });
        }
        Ok(())
    }

    fn start_commitment(&mut self, time: u64, frame: &Frame, messages: [CommitMessage; RELAYS]) {
        let idx = self.commitments.len();
        let schedule = UnveilSchedule::plan(time, &self.cfg.timing);
        let payload_bits = messages[0].ciphertext_bits;
        for m in &messages {
            let detail = format!("{} bits, key offset {}", m.ciphertext_bits, m.key_offset);
            self.log(time, "commit_sent", frame.id, Some(m.relay), detail);
        }
        for (relay, ch) in schedule.channels.iter().enumerate() {
            self.schedule(ch.received_at, Event::Deliver { commitment: idx, relay });
        }
        self.schedule(schedule.epoch, Event::Unveil { commitment: idx });
        self.stats.committed += 1;
        self.commitments.push(CommitmentRecord {
            frame_id: frame.id,
            committed_bit: self.cfg.commit_bit,
            payload_mode: self.cfg.payload_mode,
            payload_bits,
            messages: messages.to_vec(),
            tampered: false,
            schedule,
            relay_payloads: vec![None; RELAYS],
            relays_consistent: false,
            disclosure: String::new(),
            counts: None,
            verdict: Verdict::Reject,
        });
        self.committed_frames.push(frame.clone());
    }

    fn on_deliver(&mut self, time: u64, c: usize, relay: usize) {
        let mut msg = self.commitments[c].messages[relay].clone();
        let frame_id = msg.frame_id;
        if let Some(t) = self.cfg.tamper.filter(|t| t.relay == relay) {
            if t.bit < msg.payload_ciphertext.len() {
                msg.payload_ciphertext.flip(t.bit);
                self.commitments[c].tampered = true;
            }
        }
        self.relays[relay].inbox.insert(c, msg);
        let wait = self.commitments[c].schedule.channels[relay].wait;
        self.log(time, "delivered", frame_id, Some(relay), format!("holding for {wait}"));
        self.schedule(time + wait, Event::Decrypt { commitment: c, relay });
    }

    fn on_decrypt(&mut self, time: u64, c: usize, relay: usize) -> Result<()> {
        let msg = &self.relays[relay].inbox[&c];
        let frame_id = msg.frame_id;
        let pt = otp_decrypt(&msg.payload_ciphertext, msg.key_offset, &self.buffers[relay])?;
        self.relays[relay].plaintext.insert(c, pt.clone());
        self.commitments[c].schedule.channels[relay].decrypt_at = time;
        self.commitments[c].relay_payloads[relay] = Some(pt);
        self.log(time, "decrypted", frame_id, Some(relay), String::new());
        Ok(())
    }

    fn on_unveil(&mut self, time: u64, c: usize) -> Result<()> {
        let frame = &self.committed_frames[c];
        let disclosure: Vec<Basis> = match self.cfg.alice_strategy {
            AliceStrategy::Honest => frame.alice_bases(),
            AliceStrategy::ClaimOtherBasis => frame.alice_bases().iter().map(|b| b.other()).collect(),
        };
        let p0 = self.relays[0].plaintext.get(&c);
        let p1 = self.relays[1].plaintext.get(&c);
        let (consistent, counts, verdict) = match relay_consistency_check(p0, p1) {
            Ok(true) => {
                let counts = VerificationCounts::tally(frame, &disclosure)?;
                let payload = p0.expect("checked above");
                let v = bob_verify(
                    frame,
                    &disclosure,
                    payload,
                    &counts,
                    &self.cfg.thresholds(),
                    &self.codebook,
                    self.cfg.payload_mode,
                )?;
                (true, Some(counts), v)
            }
            Ok(false) | Err(Error::MissingPayload(_)) => (false, None, Verdict::Reject),
            Err(e) => return Err(e),
        };
        let frame_id = frame.id;
        let rec = &mut self.commitments[c];
        rec.relays_consistent = consistent;
        rec.disclosure = disclosure
            .iter()
            .map(|b| if *b == Basis::Rectilinear { 'R' } else { 'D' })
            .collect();
        rec.counts = counts;
        rec.verdict = verdict;
        let detail = match counts {
            Some(k) => format!(
                "relays agree; n_rect={} n_diag={} err_rect={} err_diag={}; {verdict:?}",
                k.n_rect, k.n_diag, k.n_err_rect, k.n_err_diag
            ),
            None => format!("relay payloads differ; {verdict:?}"),
        };
        self.log(time, "unveil", frame_id, None, detail);
        Ok(())
    }

    fn finish(mut self) -> Result<SessionTranscript> {
        self.stats.pulses_sent = self.frames.pulses_sent();
        self.stats.sifted_bits = self.distiller.sifted_total();
        self.stats.credited_bits = self.distiller.credited_total();
        let verdict = if self.commitments.is_empty() {
            SessionVerdict::NoCommitFrame
        } else if self.commitments.iter().any(|c| c.verdict == Verdict::Reject) {
            SessionVerdict::Reject
        } else {
            match self.commitments[0].verdict {
                Verdict::Accept0 => SessionVerdict::Accept0,
                Verdict::Accept1 => SessionVerdict::Accept1,
                Verdict::Reject => SessionVerdict::Reject,
            }
        };
        let key_ledger = self
            .buffers
            .iter()
            .enumerate()
            .map(|(relay, b)| ChannelLedger {
                relay,
                credited: b.total(),
                consumed: b.consumed(),
                available: b.available(),
                spans: b.spans().to_vec(),
            })
            .collect();
        Ok(SessionTranscript {
            commit_probability: commit_probability(self.cfg.n_quarter, self.codebook.size())?,
            config: self.cfg.clone(),
            verdict,
            stats: self.stats,
            key_ledger,
            commitments: self.commitments,
            aborted: self.aborted,
            events: self.events,
            frames: self.cfg.export_frames.then_some(self.exported),
        })
    }
}

/// Runs one full session.
pub fn run_session(config: &SessionConfig) -> Result<SessionTranscript> {
    Session::new(config)?.run()
}
