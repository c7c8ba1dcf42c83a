//! Ultrasonic proximity-tracing stack.
//!
//! The crate is organized as a pipeline from cryptographic identifiers down
//! to audio samples and back up:
//!
//! - [`ids`] — seed → daily ID → rolling proximity ID hash-chain schedule,
//!   contact logging and exposure matching.
//! - [`codec`] — Reed-Solomon protected data units, multi-unit frames, and
//!   the symbol/chunk wire representation.
//! - [`modem`] — multi-tone ultrasonic synthesis and demodulation at 48 kHz,
//!   plus band-energy measurement for carrier sensing.
//! - [`medium`] — simulated acoustic scenes: attenuation, delay, occlusion,
//!   walls, and noise sources.
//! - [`mac`] — the per-node broadcast protocol: channel scan, random channel
//!   choice, collision backoff, and noise-adaptive redundancy.
//! - [`sim`] — multi-node scenario runner, distance/volume sweeps, and
//!   tracing-success metrics.
//! - [`server`] — health-authority service: authenticated uploads of daily
//!   IDs and cursor-based delta sync, plus the client fetch-and-match side.

pub mod audio;
pub mod codec;
pub mod ids;
pub mod mac;
pub mod medium;
pub mod modem;
pub mod server;
pub mod sim;
