//! Rolling identifier schedule and exposure matching.
//!
//! Every node owns a single 32-byte secret seed. From it, a SHA-256 hash
//! chain yields one 32-byte daily ID per day, and from each daily ID a
//! second chain yields 1,440 16-byte rolling proximity IDs (one per minute
//! of the day). Only rolling IDs are ever broadcast; only daily IDs are
//! ever uploaded. A receiver keeps heard rolling IDs in a [`ContactLog`]
//! and matches them against published daily IDs by regenerating the
//! rolling IDs locally.

use std::fmt;
use std::io::{BufRead, Write};

use rand::RngCore;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Rolling proximity IDs per day (one per minute).
pub const RPIDS_PER_DAY: usize = 1440;

/// Contact log retention window in seconds (14 days).
pub const RETENTION_SECONDS: f64 = 14.0 * 86_400.0;

#[derive(Debug, Error, PartialEq)]
pub enum IdError {
    #[error("rolling ID count {0} exceeds the {RPIDS_PER_DAY} per-day schedule")]
    TooManyRpids(usize),
    #[error("expected {expected} hex characters, got {got}")]
    BadHexLength { expected: usize, got: usize },
    #[error("invalid hex: {0}")]
    BadHex(#[from] hex::FromHexError),
}

/// Per-device secret. Generated once, never broadcast, never uploaded.
///
/// Deliberately has no `Serialize` impl; the only way out of the process
/// is the explicit [`Seed::to_hex`] used by local key storage.
#[derive(Clone, PartialEq, Eq)]
pub struct Seed([u8; 32]);

impl Seed {
    /// Draw a fresh seed from a cryptographically secure source.
    pub fn generate() -> Self {
        let mut bytes = [0u8; 32];
        rand::rngs::OsRng.fill_bytes(&mut bytes);
        Seed(bytes)
    }

    pub fn from_bytes(bytes: [u8; 32]) -> Self {
        Seed(bytes)
    }

    pub fn from_hex(s: &str) -> Result<Self, IdError> {
        let bytes = parse_hex_array::<32>(s)?;
        Ok(Seed(bytes))
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }
}

impl fmt::Debug for Seed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        // Never leak the seed through debug output.
        write!(f, "Seed(..)")
    }
}

/// One day's 32-byte identifier in the seed-keyed hash chain.
#[derive(Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DailyRandomId {
    #[serde(with = "hex_bytes_32")]
    pub bytes: [u8; 32],
    pub day_index: u32,
}

impl DailyRandomId {
    pub fn to_hex(&self) -> String {
        hex::encode(self.bytes)
    }

    pub fn from_hex(s: &str, day_index: u32) -> Result<Self, IdError> {
        Ok(DailyRandomId {
            bytes: parse_hex_array::<32>(s)?,
            day_index,
        })
    }
}

impl fmt::Debug for DailyRandomId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Drid(day {}, {})", self.day_index, self.to_hex())
    }
}

/// One minute's 16-byte broadcast identifier.
#[derive(Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RollingProximityId {
    #[serde(with = "hex_bytes_16")]
    pub bytes: [u8; 16],
    pub day_index: u32,
    pub slot: u16,
}

impl RollingProximityId {
    pub fn to_hex(&self) -> String {
        hex::encode(self.bytes)
    }
}

impl fmt::Debug for RollingProximityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Rpid(day {}, slot {}, {})", self.day_index, self.slot, self.to_hex())
    }
}

/// Derive the first `n` daily IDs from a seed.
///
/// `DRID_i = SHA-256(DRID_{i-1} || seed)` with `DRID_{-1}` = 32 zero bytes.
/// Raw byte concatenation, no separators.
pub fn derive_drid_chain(seed: &Seed, n: usize) -> Vec<DailyRandomId> {
    let mut out = Vec::with_capacity(n);
    let mut prev = [0u8; 32];
    for day in 0..n {
        let mut h = Sha256::new();
        h.update(prev);
        h.update(seed.0);
        prev = h.finalize().into();
        out.push(DailyRandomId {
            bytes: prev,
            day_index: day as u32,
        });
    }
    out
}

/// Derive the first `count` rolling IDs of a day.
///
/// `RPID_i = Truncate(SHA-256(RPID_{i-1} || DRID), 16)` with `RPID_{-1}` =
/// 16 zero bytes; truncation keeps the first 16 digest bytes.
pub fn derive_rpids(drid: &DailyRandomId, count: usize) -> Result<Vec<RollingProximityId>, IdError> {
    if count > RPIDS_PER_DAY {
        return Err(IdError::TooManyRpids(count));
    }
    let mut out = Vec::with_capacity(count);
    let mut prev = [0u8; 16];
    for slot in 0..count {
        let mut h = Sha256::new();
        h.update(prev);
        h.update(drid.bytes);
        let digest = h.finalize();
        prev.copy_from_slice(&digest[..16]);
        out.push(RollingProximityId {
            bytes: prev,
            day_index: drid.day_index,
            slot: slot as u16,
        });
    }
    Ok(out)
}

/// One receiver-side log entry for a heard rolling ID.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContactRecord {
    #[serde(rename = "rpid", with = "hex_bytes_16")]
    pub rpid: [u8; 16],
    #[serde(rename = "first")]
    pub first_heard: f64,
    #[serde(rename = "last")]
    pub last_heard: f64,
    #[serde(rename = "count")]
    pub hear_count: u32,
    pub channel: u8,
}

/// Receiver-side store of heard rolling IDs with 14-day retention.
///
/// Single writer; pruning runs on every insertion.
#[derive(Debug, Clone, Default)]
pub struct ContactLog {
    records: Vec<ContactRecord>,
}

impl ContactLog {
    pub fn new() -> Self {
        Self::default()
    }

    /// Record a heard rolling ID at simulation time `now` (seconds).
    ///
    /// A repeat of an already-logged ID merges into the existing record.
    pub fn record(&mut self, rpid: [u8; 16], now: f64, channel: u8) {
        self.prune(now);
        if let Some(existing) = self
            .records
            .iter_mut()
            .find(|r| r.rpid == rpid && r.channel == channel)
        {
            existing.last_heard = existing.last_heard.max(now);
            existing.first_heard = existing.first_heard.min(now);
            existing.hear_count += 1;
        } else {
            self.records.push(ContactRecord {
                rpid,
                first_heard: now,
                last_heard: now,
                hear_count: 1,
                channel,
            });
        }
    }

    /// Drop records whose last hearing is older than the retention window.
    pub fn prune(&mut self, now: f64) {
        self.records.retain(|r| now - r.last_heard <= RETENTION_SECONDS);
    }

    pub fn records(&self) -> &[ContactRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Persist as one JSON object per line.
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for rec in &self.records {
            serde_json::to_writer(&mut w, rec)?;
            writeln!(w)?;
        }
        Ok(())
    }

    /// Load from JSON-lines; blank lines are skipped.
    pub fn read_jsonl<R: BufRead>(r: R) -> std::io::Result<Self> {
        let mut records = Vec::new();
        for line in r.lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: ContactRecord = serde_json::from_str(&line)?;
            records.push(rec);
        }
        Ok(ContactLog { records })
    }
}

/// One matched contact: the log entry plus the (day, slot) that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExposureMatch {
    pub record: ContactRecord,
    pub day_index: u32,
    pub slot: u16,
}

/// Result of matching a contact log against published daily IDs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExposureReport {
    pub matches: Vec<ExposureMatch>,
    pub total_matched: usize,
}

/// Match a contact log against infected users' daily IDs.
///
/// Regenerates the full rolling-ID schedule of every infected daily ID and
/// reports each log entry whose ID appears in it.
pub fn match_exposures(infected: &[DailyRandomId], log: &[ContactRecord]) -> ExposureReport {
    let mut table: std::collections::HashMap<[u8; 16], (u32, u16)> = std::collections::HashMap::new();
    for drid in infected {
        // count ≤ RPIDS_PER_DAY by construction, cannot fail
        let rpids = derive_rpids(drid, RPIDS_PER_DAY).expect("full schedule");
        for rpid in rpids {
            table.entry(rpid.bytes).or_insert((rpid.day_index, rpid.slot));
        }
    }
    let mut matches = Vec::new();
    for rec in log {
        if let Some(&(day_index, slot)) = table.get(&rec.rpid) {
            matches.push(ExposureMatch {
                record: rec.clone(),
                day_index,
                slot,
            });
        }
    }
    let total_matched = matches.len();
    ExposureReport { matches, total_matched }
}

fn parse_hex_array<const N: usize>(s: &str) -> Result<[u8; N], IdError> {
    let s = s.trim();
    if s.len() != 2 * N {
        return Err(IdError::BadHexLength {
            expected: 2 * N,
            got: s.len(),
        });
    }
    let v = hex::decode(s)?;
    let mut out = [0u8; N];
    out.copy_from_slice(&v);
    Ok(out)
}

macro_rules! hex_bytes_mod {
    ($name:ident, $n:expr) => {
        mod $name {
            use serde::{Deserialize, Deserializer, Serializer};

            pub fn serialize<S: Serializer>(bytes: &[u8; $n], s: S) -> Result<S::Ok, S::Error> {
                s.serialize_str(&hex::encode(bytes))
            }

            pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<[u8; $n], D::Error> {
                let s = String::deserialize(d)?;
                let v = hex::decode(&s).map_err(serde::de::Error::custom)?;
                v.try_into()
                    .map_err(|_| serde::de::Error::custom(concat!("expected ", $n, " bytes")))
            }
        }
    };
}

hex_bytes_mod!(hex_bytes_32, 32);
hex_bytes_mod!(hex_bytes_16, 16);

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    // Frozen with an external SHA-256 reference.
    const DRID0_ZERO_SEED: &str = "f5a5fd42d16a20302798ef6ed309979b43003d2320d9f0e8ea9831a92759fb4b";
    const RPID0_ZERO_DRID: &str = "17b0761f87b081d5cf10757ccc89f12b";

    fn zero_seed() -> Seed {
        Seed::from_bytes([0u8; 32])
    }

    #[test]
    fn drid_chain_zero_seed_first_link() {
        let chain = derive_drid_chain(&zero_seed(), 1);
        assert_eq!(chain.len(), 1);
        assert_eq!(chain[0].to_hex(), DRID0_ZERO_SEED);
        assert_eq!(chain[0].day_index, 0);
    }

    #[test]
    fn drid_chain_counting_seed_fixture() {
        // Frozen with an external SHA-256 reference.
        let mut bytes = [0u8; 32];
        for (i, b) in bytes.iter_mut().enumerate() {
            *b = i as u8;
        }
        let chain = derive_drid_chain(&Seed::from_bytes(bytes), 3);
        assert_eq!(chain[0].to_hex(), "bb2275c49f28ad52cae6d55e34a974a58c7a3ba26f976e8ecbbe7a536918dc73");
        assert_eq!(chain[1].to_hex(), "de961d6b9f269c61ba4852123480daaced4c6a5d6df190941fb20be417d78a2e");
        assert_eq!(chain[2].to_hex(), "8efc5b4715712425df4301dae7996040e06c6fa0be4038818defd4ce7bc6c280");
    }

    #[test]
    fn drid_chain_empty_and_distinct() {
        assert!(derive_drid_chain(&zero_seed(), 0).is_empty());
        let chain = derive_drid_chain(&zero_seed(), 14);
        assert_eq!(chain.len(), 14);
        for i in 0..14 {
            assert_eq!(chain[i].bytes.len(), 32);
            for j in i + 1..14 {
                assert_ne!(chain[i].bytes, chain[j].bytes);
            }
        }
    }

    #[test]
    fn rpid_zero_drid_first_link() {
        let drid = DailyRandomId { bytes: [0u8; 32], day_index: 0 };
        let rpids = derive_rpids(&drid, 3).unwrap();
        assert_eq!(rpids[0].to_hex(), RPID0_ZERO_DRID);
        // Frozen with an external SHA-256 reference.
        assert_eq!(rpids[1].to_hex(), "14c881b0016e1d54adc5d2e8aca31896");
        assert_eq!(rpids[2].to_hex(), "f206be572760c076ff003326e371ddda");
    }

    #[test]
    fn rpid_full_day_and_determinism() {
        let drid = &derive_drid_chain(&zero_seed(), 1)[0];
        let a = derive_rpids(drid, RPIDS_PER_DAY).unwrap();
        let b = derive_rpids(drid, RPIDS_PER_DAY).unwrap();
        assert_eq!(a.len(), 1440);
        assert_eq!(a, b);
        assert_eq!(a[1439].slot, 1439);
    }

    #[test]
    fn rpid_count_bound() {
        let drid = DailyRandomId { bytes: [0u8; 32], day_index: 0 };
        assert_eq!(derive_rpids(&drid, 1441), Err(IdError::TooManyRpids(1441)));
        assert!(derive_rpids(&drid, 0).unwrap().is_empty());
    }

    #[test]
    fn rpid_is_digest_prefix() {
        let drid = DailyRandomId { bytes: [7u8; 32], day_index: 3 };
        let rpids = derive_rpids(&drid, 2).unwrap();
        let mut h = Sha256::new();
        h.update([0u8; 16]);
        h.update(drid.bytes);
        let full: [u8; 32] = h.finalize().into();
        assert_eq!(rpids[0].bytes, full[..16]);
    }

    #[test]
    fn thousand_random_seeds_distinct_first_drid() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut seen = std::collections::HashSet::new();
        for _ in 0..1000 {
            let mut bytes = [0u8; 32];
            rng.fill(&mut bytes);
            let chain = derive_drid_chain(&Seed::from_bytes(bytes), 1);
            assert!(seen.insert(chain[0].bytes));
        }
    }

    #[test]
    fn match_empty_infected_set() {
        let log = vec![ContactRecord {
            rpid: [1; 16],
            first_heard: 0.0,
            last_heard: 1.0,
            hear_count: 1,
            channel: 0,
        }];
        let report = match_exposures(&[], &log);
        assert_eq!(report.total_matched, 0);
        assert!(report.matches.is_empty());
    }

    #[test]
    fn match_round_trip_all_days_and_slots() {
        let seed = Seed::from_bytes([42u8; 32]);
        let chain = derive_drid_chain(&seed, 14);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let day = rng.gen_range(0..14usize);
            let slot = rng.gen_range(0..RPIDS_PER_DAY);
            let rpid = &derive_rpids(&chain[day], slot + 1).unwrap()[slot];
            let mut log = ContactLog::new();
            log.record(rpid.bytes, 100.0, 1);
            let report = match_exposures(&[chain[day].clone()], log.records());
            assert_eq!(report.total_matched, 1);
            assert_eq!(report.matches[0].day_index, day as u32);
            assert_eq!(report.matches[0].slot, slot as u16);
        }
    }

    #[test]
    fn match_specific_slot_37() {
        let seed = Seed::from_bytes([3u8; 32]);
        let drid = &derive_drid_chain(&seed, 1)[0];
        let rpid = &derive_rpids(drid, 38).unwrap()[37];
        let log = vec![ContactRecord {
            rpid: rpid.bytes,
            first_heard: 5.0,
            last_heard: 6.0,
            hear_count: 2,
            channel: 0,
        }];
        let report = match_exposures(&[drid.clone()], &log);
        assert_eq!(report.total_matched, 1);
        assert_eq!(report.matches[0].slot, 37);
    }

    #[test]
    fn random_rpids_never_match() {
        let seed = Seed::from_bytes([9u8; 32]);
        let chain = derive_drid_chain(&seed, 14);
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let log: Vec<ContactRecord> = (0..200)
            .map(|i| {
                let mut rpid = [0u8; 16];
                rng.fill(&mut rpid);
                ContactRecord {
                    rpid,
                    first_heard: i as f64,
                    last_heard: i as f64,
                    hear_count: 1,
                    channel: 0,
                }
            })
            .collect();
        let report = match_exposures(&chain, &log);
        assert_eq!(report.total_matched, 0);
    }

    #[test]
    fn contact_log_merges_and_prunes() {
        let mut log = ContactLog::new();
        log.record([1; 16], 10.0, 0);
        log.record([1; 16], 20.0, 0);
        assert_eq!(log.len(), 1);
        assert_eq!(log.records()[0].hear_count, 2);
        assert_eq!(log.records()[0].first_heard, 10.0);
        assert_eq!(log.records()[0].last_heard, 20.0);

        // A second ID, then jump past the retention window: only it survives.
        log.record([2; 16], 30.0, 1);
        log.record([3; 16], 20.0 + RETENTION_SECONDS + 1.0, 0);
        assert_eq!(log.len(), 2);
        assert!(log.records().iter().all(|r| r.rpid != [1; 16]));
    }

    #[test]
    fn contact_log_jsonl_round_trip() {
        let mut log = ContactLog::new();
        log.record([0xAB; 16], 1.5, 0);
        log.record([0xCD; 16], 2.5, 1);
        let mut buf = Vec::new();
        log.write_jsonl(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        let first: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
        assert_eq!(first["rpid"], "abababababababababababababababab");
        assert_eq!(first["count"], 1);
        let loaded = ContactLog::read_jsonl(&buf[..]).unwrap();
        assert_eq!(loaded.records(), log.records());
    }

    #[test]
    fn seed_hex_round_trip_and_debug_redaction() {
        let seed = Seed::generate();
        let other = Seed::generate();
        assert_ne!(seed, other);
        let parsed = Seed::from_hex(&seed.to_hex()).unwrap();
        assert_eq!(seed, parsed);
        assert_eq!(format!("{:?}", seed), "Seed(..)");
        assert!(Seed::from_hex("abcd").is_err());
    }
}
