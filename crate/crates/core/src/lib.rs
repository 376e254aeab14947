//! Bit commitment carried inside BB84 key-distribution frames.
//!
//! The crate is organised bottom-up:
//!
//! * [`math`]: closed-form key-rate, commitment-probability and binding
//!   expressions, evaluated in the log domain.
//! * [`codebook`]: balanced 2N-bit codewords with combinadic rank/unrank.
//! * [`frames`]: bit-level BB84 simulation (preparation, lossy/noisy channel,
//!   measurement, framing, sifting and rate-based key crediting).
//! * [`protocol`]: one-time-pad key buffers and the commit/unveil/verify
//!   exchange between Alice, the relays P0/P1 and Bob.
//! * [`routing`]: serve probabilities, flooding path discovery and circuit
//!   reservation in a trusted-relay network.
//!
//! All randomness flows from explicit `u64` seeds through ChaCha8.

pub mod bits;
pub mod codebook;
pub mod error;
pub mod frames;
pub mod math;
pub mod protocol;
pub mod routing;

pub use error::{Error, Result};
