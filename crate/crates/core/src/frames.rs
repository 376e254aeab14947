//! Bit-level BB84: Bob's preparation, a loss + flip channel, Alice's random
//! basis measurement, framing into 4N detections and rate-based key credit.
//!
//! Randomness comes from ChaCha8 seeded with `seed_from_u64`. Bob's
//! preparation draws from stream 0 and the channel/measurement from stream 1,
//! so the two are independent but reproducible from a single seed. Draw order
//! is fixed per pulse, which makes batch and streaming generation identical.

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bits::BitString;
use crate::error::{Error, Result};
use crate::math::{final_key_rate_with_efficiency, RateParams};

const PREPARATION_STREAM: u64 = 0;
const CHANNEL_STREAM: u64 = 1;

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Basis {
    Rectilinear,
    Diagonal,
}

impl Basis {
    pub fn other(self) -> Basis {
        match self {
            Basis::Rectilinear => Basis::Diagonal,
            Basis::Diagonal => Basis::Rectilinear,
        }
    }

    /// Basis carrying a committed bit: rectilinear for 0, diagonal for 1.
    pub fn for_bit(bit: bool) -> Basis {
        if bit {
            Basis::Diagonal
        } else {
            Basis::Rectilinear
        }
    }

    fn random<R: Rng>(rng: &mut R) -> Basis {
        if rng.random::<bool>() {
            Basis::Diagonal
        } else {
            Basis::Rectilinear
        }
    }
}

/// Polarization state implied by a (basis, bit) pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarization {
    Horizontal,
    Vertical,
    Diagonal,
    Antidiagonal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Pulse {
    pub index: u64,
    pub basis: Basis,
    pub bit: bool,
}

impl Pulse {
    pub fn polarization(&self) -> Polarization {
        match (self.basis, self.bit) {
            (Basis::Rectilinear, false) => Polarization::Horizontal,
            (Basis::Rectilinear, true) => Polarization::Vertical,
            (Basis::Diagonal, false) => Polarization::Diagonal,
            (Basis::Diagonal, true) => Polarization::Antidiagonal,
        }
    }
}

/// Infinite stream of Bob's randomly prepared pulses.
#[derive(Debug, Clone)]
pub struct PulseSource {
    rng: ChaCha8Rng,
    next_index: u64,
}

impl PulseSource {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: stream_rng(seed, PREPARATION_STREAM),
            next_index: 0,
        }
    }
}

impl Iterator for PulseSource {
    type Item = Pulse;

    fn next(&mut self) -> Option<Pulse> {
        let basis = Basis::random(&mut self.rng);
        let bit = self.rng.random::<bool>();
        let index = self.next_index;
        self.next_index += 1;
        Some(Pulse { index, basis, bit })
    }
}

pub fn prepare_pulses(count: usize, rng_seed: u64) -> Vec<Pulse> {
    PulseSource::new(rng_seed).take(count).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ChannelDoc")]
pub struct ChannelModel {
    pub detection_prob: f64,
    /// Probability that a same-basis measurement returns the wrong bit.
    pub flip_prob: f64,
}

#[derive(Deserialize)]
struct ChannelDoc {
    detection_prob: f64,
    flip_prob: f64,
}

impl TryFrom<ChannelDoc> for ChannelModel {
    type Error = Error;

    fn try_from(d: ChannelDoc) -> Result<Self> {
        ChannelModel::new(d.detection_prob, d.flip_prob)
    }
}

impl ChannelModel {
    pub fn new(detection_prob: f64, flip_prob: f64) -> Result<Self> {
        if !(detection_prob > 0.0 && detection_prob <= 1.0) {
            return Err(Error::Domain {
                name: "detection_prob",
                value: detection_prob,
                domain: "(0, 1]",
            });
        }
        if !(0.0..0.5).contains(&flip_prob) {
            return Err(Error::Domain {
                name: "flip_prob",
                value: flip_prob,
                domain: "[0, 0.5)",
            });
        }
        Ok(Self {
            detection_prob,
            flip_prob,
        })
    }

    pub fn noiseless() -> Self {
        Self {
            detection_prob: 1.0,
            flip_prob: 0.0,
        }
    }
}

/// What Bob actually sent. Only the verifier and tests look at this.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub bob_basis: Basis,
    pub bob_bit: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MeasurementRecord {
    pub index: u64,
    pub alice_basis: Basis,
    pub outcome: bool,
    pub ground_truth: GroundTruth,
}

impl MeasurementRecord {
    pub fn bases_match(&self) -> bool {
        self.alice_basis == self.ground_truth.bob_basis
    }
}

/// Measures `pulse` in a caller-chosen basis. Same basis: correct bit
/// except with `flip_prob`; other basis: a fair coin.
pub fn measure_pulse<R: Rng>(
    pulse: &Pulse,
    alice_basis: Basis,
    channel: &ChannelModel,
    rng: &mut R,
) -> MeasurementRecord {
    let outcome = if alice_basis == pulse.basis {
        pulse.bit ^ rng.random_bool(channel.flip_prob)
    } else {
        rng.random::<bool>()
    };
    MeasurementRecord {
        index: pulse.index,
        alice_basis,
        outcome,
        ground_truth: GroundTruth {
            bob_basis: pulse.basis,
            bob_bit: pulse.bit,
        },
    }
}

/// Alice's side of the channel: detection, then a random-basis measurement.
#[derive(Debug, Clone)]
pub struct Receiver {
    rng: ChaCha8Rng,
    channel: ChannelModel,
}

impl Receiver {
    pub fn new(channel: ChannelModel, seed: u64) -> Self {
        Self {
            rng: stream_rng(seed, CHANNEL_STREAM),
            channel,
        }
    }

    /// `None` when the pulse is lost.
    pub fn receive(&mut self, pulse: &Pulse) -> Option<MeasurementRecord> {
        if !self.rng.random_bool(self.channel.detection_prob) {
            return None;
        }
        let basis = Basis::random(&mut self.rng);
        Some(measure_pulse(pulse, basis, &self.channel, &mut self.rng))
    }
}

/// Detected records only; an undetected pulse simply has no record.
pub fn transmit_and_measure(
    pulses: &[Pulse],
    channel: &ChannelModel,
    rng_seed: u64,
) -> Vec<MeasurementRecord> {
    let mut rx = Receiver::new(*channel, rng_seed);
    pulses.iter().filter_map(|p| rx.receive(p)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrameClass {
    CommitmentCandidate,
    Normal,
}

/// 4N consecutive detections.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub id: u64,
    pub records: Vec<MeasurementRecord>,
    pub classification: FrameClass,
}

impl Frame {
    pub fn new(id: u64, records: Vec<MeasurementRecord>) -> Self {
        let rect = records
            .iter()
            .filter(|r| r.alice_basis == Basis::Rectilinear)
            .count();
        let classification = if 2 * rect == records.len() {
            FrameClass::CommitmentCandidate
        } else {
            FrameClass::Normal
        };
        Self {
            id,
            records,
            classification,
        }
    }

    pub fn is_candidate(&self) -> bool {
        self.classification == FrameClass::CommitmentCandidate
    }

    pub fn alice_bases(&self) -> Vec<Basis> {
        self.records.iter().map(|r| r.alice_basis).collect()
    }

    /// Alice's outcomes for the records she measured in `basis`, in arrival
    /// order.
    pub fn outcomes_in(&self, basis: Basis) -> BitString {
        self.records
            .iter()
            .filter(|r| r.alice_basis == basis)
            .map(|r| r.outcome)
            .collect()
    }

    /// Outcomes of records whose measurement basis matched Bob's.
    pub fn sifted(&self) -> BitString {
        self.records
            .iter()
            .filter(|r| r.bases_match())
            .map(|r| r.outcome)
            .collect()
    }
}

/// Groups records into frames of 4N; a trailing partial group is dropped.
pub fn assemble_frames(records: &[MeasurementRecord], n_quarter: u32) -> Vec<Frame> {
    let size = 4 * n_quarter as usize;
    if size == 0 {
        return Vec::new();
    }
    records
        .chunks_exact(size)
        .enumerate()
        .map(|(i, chunk)| Frame::new(i as u64, chunk.to_vec()))
        .collect()
}

/// Pulls pulses through the channel until 4N detections make a frame.
#[derive(Debug, Clone)]
pub struct FrameStream {
    source: PulseSource,
    receiver: Receiver,
    n_quarter: u32,
    next_id: u64,
    pulses_sent: u64,
}

impl FrameStream {
    pub fn new(n_quarter: u32, channel: ChannelModel, seed: u64) -> Self {
        Self {
            source: PulseSource::new(seed),
            receiver: Receiver::new(channel, seed),
            n_quarter,
            next_id: 0,
            pulses_sent: 0,
        }
    }

    pub fn pulses_sent(&self) -> u64 {
        self.pulses_sent
    }
}

impl Iterator for FrameStream {
    type Item = Frame;

    fn next(&mut self) -> Option<Frame> {
        let size = 4 * self.n_quarter as usize;
        let mut records = Vec::with_capacity(size);
        while records.len() < size {
            let pulse = self.source.next()?;
            self.pulses_sent += 1;
            if let Some(r) = self.receiver.receive(&pulse) {
                records.push(r);
            }
        }
        let frame = Frame::new(self.next_id, records);
        self.next_id += 1;
        Some(frame)
    }
}

/// Number of key bits credited for `sifted` bits at `rate`; negative rates
/// credit nothing.
pub fn credited_bits(sifted: u64, rate: f64) -> u64 {
    (sifted as f64 * rate.max(0.0)).floor() as u64
}

/// Incremental sifting and key crediting. After any sequence of frames the
/// credited total equals `floor(total sifted * max(0, r))`, and the key bits
/// are the leading sifted outcomes, exactly as a single batch call would give.
#[derive(Debug, Clone)]
pub struct Distiller {
    rate: f64,
    sifted_total: u64,
    credited_total: u64,
    pending: VecDeque<bool>,
}

impl Distiller {
    pub fn new(params: &RateParams) -> Result<Self> {
        params.validate()?;
        Ok(Self {
            rate: final_key_rate_with_efficiency(params.q_tol, params.f_ec)?,
            sifted_total: 0,
            credited_total: 0,
            pending: VecDeque::new(),
        })
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn sifted_total(&self) -> u64 {
        self.sifted_total
    }

    pub fn credited_total(&self) -> u64 {
        self.credited_total
    }

    /// Sifts `frame` and returns the newly credited key bits.
    pub fn absorb(&mut self, frame: &Frame) -> BitString {
        let sifted = frame.sifted();
        self.sifted_total += sifted.len() as u64;
        self.pending.extend(sifted.iter());
        let target = credited_bits(self.sifted_total, self.rate);
        let fresh = (target - self.credited_total) as usize;
        self.credited_total = target;
        self.pending.drain(..fresh).collect()
    }
}

/// Batch form of [`Distiller`].
pub fn sift_and_distill(frames: &[Frame], params: &RateParams) -> Result<BitString> {
    let mut d = Distiller::new(params)?;
    let mut out = BitString::new();
    for f in frames {
        for b in d.absorb(f).iter() {
            out.push(b);
        }
    }
    Ok(out)
}
