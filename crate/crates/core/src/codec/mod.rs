//! Wire representation of one rolling-ID broadcast.
//!
//! A 16-byte payload becomes a 20-byte Reed-Solomon protected *data unit*
//! (40 4-bit symbols in 20 two-symbol *chunks*). A *data frame* repeats the
//! unit 1–5 times for redundancy and brackets the sequence with head/tail
//! delimiter chunks. The receiver segments interior chunks back into
//! 20-chunk units and keeps the first one that decodes.

mod gf;
mod rs;

pub use rs::{decode as rs_decode_unit, encode as rs_encode_unit};
pub use rs::{PARITY_LEN, PAYLOAD_LEN, UNIT_LEN};

use thiserror::Error;

/// Most units a frame may carry; keeps worst-case airtime below one MAC slot.
pub const MAX_UNITS: usize = 5;

/// Chunks per data unit: 20 bytes = 40 nibbles = 20 chunk slots.
pub const CHUNKS_PER_UNIT: usize = UNIT_LEN;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CodecError {
    #[error("payload must be {PAYLOAD_LEN} bytes, got {0}")]
    BadPayloadLength(usize),
    #[error("unit must be {UNIT_LEN} bytes, got {0}")]
    BadUnitLength(usize),
    #[error("unit count {0} outside 1..={MAX_UNITS}")]
    BadUnitCount(usize),
}

/// One 4-bit data value or a frame delimiter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Symbol {
    /// Payload nibble in 0..=15.
    Data(u8),
    /// Frame start delimiter.
    Head,
    /// Frame end delimiter.
    Tail,
}

impl Symbol {
    /// Index into a 21-frequency group: nibbles map to 0..=15, head to 16,
    /// tail to 17. Indices 18..=20 stay unused.
    pub fn group_index(self) -> usize {
        match self {
            Symbol::Data(v) => {
                debug_assert!(v < 16);
                v as usize
            }
            Symbol::Head => 16,
            Symbol::Tail => 17,
        }
    }

    /// Inverse of [`Symbol::group_index`].
    pub fn from_group_index(index: usize) -> Option<Symbol> {
        match index {
            0..=15 => Some(Symbol::Data(index as u8)),
            16 => Some(Symbol::Head),
            17 => Some(Symbol::Tail),
            _ => None,
        }
    }

    fn nibble(self) -> u8 {
        match self {
            Symbol::Data(v) => v,
            // Delimiters inside a unit body only appear through decode
            // errors; the RS layer rejects the resulting unit.
            Symbol::Head | Symbol::Tail => 0,
        }
    }
}

/// Number of distinct symbols per group (16 data values + head + tail).
pub const SYMBOLS_PER_GROUP: usize = 18;

/// One time slice carrying two symbols in parallel: `low` rides the lower
/// frequency group, `high` the upper one.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Chunk {
    pub low: Symbol,
    pub high: Symbol,
}

impl Chunk {
    pub const HEAD: Chunk = Chunk { low: Symbol::Head, high: Symbol::Head };
    pub const TAIL: Chunk = Chunk { low: Symbol::Tail, high: Symbol::Tail };

    pub fn data(low: u8, high: u8) -> Chunk {
        Chunk {
            low: Symbol::Data(low),
            high: Symbol::Data(high),
        }
    }

    pub fn is_head(self) -> bool {
        self == Chunk::HEAD
    }

    pub fn is_tail(self) -> bool {
        self == Chunk::TAIL
    }
}

/// A 20-byte RS(20,16) codeword: 16 payload bytes plus 4 parity bytes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DataUnit([u8; UNIT_LEN]);

impl DataUnit {
    /// RS-encode a 16-byte payload.
    pub fn encode(payload: &[u8]) -> Result<DataUnit, CodecError> {
        let payload: &[u8; PAYLOAD_LEN] = payload
            .try_into()
            .map_err(|_| CodecError::BadPayloadLength(payload.len()))?;
        Ok(DataUnit(rs::encode(payload)))
    }

    /// Wrap 20 raw received bytes without validating parity.
    pub fn from_raw(bytes: &[u8]) -> Result<DataUnit, CodecError> {
        let bytes: &[u8; UNIT_LEN] = bytes
            .try_into()
            .map_err(|_| CodecError::BadUnitLength(bytes.len()))?;
        Ok(DataUnit(*bytes))
    }

    /// Correct up to 2 byte errors and return the payload; `None` when
    /// uncorrectable (a normal outcome for garbled units, not a fault).
    pub fn decode(&self) -> Option<[u8; PAYLOAD_LEN]> {
        rs::decode(&self.0)
    }

    pub fn bytes(&self) -> &[u8; UNIT_LEN] {
        &self.0
    }
}

/// 1–5 copies of the same payload's data unit.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DataFrame {
    units: Vec<DataUnit>,
}

impl DataFrame {
    /// Build a frame carrying `unit_count` copies of the payload's unit.
    pub fn new(payload: &[u8], unit_count: usize) -> Result<DataFrame, CodecError> {
        if !(1..=MAX_UNITS).contains(&unit_count) {
            return Err(CodecError::BadUnitCount(unit_count));
        }
        let unit = DataUnit::encode(payload)?;
        Ok(DataFrame {
            units: vec![unit; unit_count],
        })
    }

    pub fn units(&self) -> &[DataUnit] {
        &self.units
    }

    pub fn unit_count(&self) -> usize {
        self.units.len()
    }

    /// Total chunks on the air: head + 20 per unit + tail.
    pub fn chunk_count(&self) -> usize {
        1 + CHUNKS_PER_UNIT * self.units.len() + 1
    }
}

/// Split a unit into 20 chunks. Nibbles are taken high-first within each
/// byte; chunk `k` carries nibbles `2k` (low group) and `2k+1` (high group).
pub fn unit_to_chunks(unit: &DataUnit) -> Vec<Chunk> {
    unit.0
        .iter()
        .map(|&byte| Chunk::data(byte >> 4, byte & 0x0F))
        .collect()
}

/// Reassemble 20 chunks into 20 raw bytes. Delimiter symbols inside the
/// body map to zero nibbles and surface later as RS failures.
pub fn chunks_to_unit(chunks: &[Chunk]) -> Result<DataUnit, CodecError> {
    if chunks.len() != CHUNKS_PER_UNIT {
        return Err(CodecError::BadUnitLength(chunks.len()));
    }
    let mut bytes = [0u8; UNIT_LEN];
    for (byte, chunk) in bytes.iter_mut().zip(chunks) {
        *byte = (chunk.low.nibble() << 4) | chunk.high.nibble();
    }
    Ok(DataUnit(bytes))
}

/// Serialize a frame to its on-air chunk sequence:
/// `(H,H) ++ unit chunks ++ (J,J)`.
pub fn frame_to_chunks(frame: &DataFrame) -> Vec<Chunk> {
    let mut out = Vec::with_capacity(frame.chunk_count());
    out.push(Chunk::HEAD);
    for unit in &frame.units {
        out.extend(unit_to_chunks(unit));
    }
    out.push(Chunk::TAIL);
    out
}

/// Recover a payload from a received chunk sequence.
///
/// Strips the delimiters when present (a truncated stream may lack them),
/// segments the interior into consecutive 20-chunk units, and returns the
/// payload of the first unit that RS-decodes. `None` when no unit does.
pub fn chunks_to_payload(chunks: &[Chunk]) -> Option<[u8; PAYLOAD_LEN]> {
    let mut interior = chunks;
    if let Some((first, rest)) = interior.split_first() {
        if first.is_head() {
            interior = rest;
        }
    }
    if let Some((last, rest)) = interior.split_last() {
        if last.is_tail() {
            interior = rest;
        }
    }
    let remainder = interior.len() % CHUNKS_PER_UNIT;
    if remainder != 0 {
        log::debug!("discarding {remainder} trailing chunks of a partial unit");
    }
    for unit_chunks in interior.chunks_exact(CHUNKS_PER_UNIT) {
        let unit = chunks_to_unit(unit_chunks).expect("exact chunk count");
        if let Some(payload) = unit.decode() {
            return Some(payload);
        }
    }
    None
}
