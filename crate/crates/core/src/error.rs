use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("{name} = {value} is outside its domain {domain}")]
    Domain {
        name: &'static str,
        value: f64,
        domain: &'static str,
    },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParam { name: &'static str, reason: String },

    #[error("bit sequence of length {got} does not match the expected length {expected}")]
    WrongLength { expected: usize, got: usize },

    #[error("sequence is not balanced: {zeros} zeros, {ones} ones")]
    Unbalanced { zeros: usize, ones: usize },

    #[error("rank {index} out of range for {capacity} balanced sequences")]
    RankOutOfRange { index: String, capacity: String },

    #[error("codebook size {x} exceeds capacity C(2N,N) = {capacity}")]
    CodebookTooLarge { x: String, capacity: String },

    #[error("insufficient key: need {needed} bits, {available} available")]
    InsufficientKey { needed: usize, available: usize },

    #[error("key range {offset}..{end} was never consumed from this buffer")]
    KeyRangeNotConsumed { offset: usize, end: usize },

    #[error("relay P{0} holds no payload for this frame")]
    MissingPayload(usize),

    #[error("frame {0} is not a commitment candidate")]
    NotCommitmentFrame(u64),

    #[error("malformed bit string: {0}")]
    MalformedBits(String),

    #[error("trials must be at least 1")]
    NoTrials,

    #[error("unknown node `{0}`")]
    UnknownNode(String),

    #[error("invalid network: {0}")]
    InvalidNetwork(String),

    #[error("no candidate paths")]
    NoPaths,

    #[error("no viable circuit: every candidate path has a zero-probability edge")]
    NoViableCircuit,

    #[error("chosen path is not among the discovered candidates")]
    PathNotCandidate,

    #[error("traffic {0} already holds a committed circuit")]
    AlreadyCommitted(String),

    #[error("circuit commitment to relay {relay} was not accepted: {outcome}")]
    CommitmentFailed { relay: String, outcome: String },
}
