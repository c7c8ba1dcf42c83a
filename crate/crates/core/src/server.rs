//! Health-authority service and its client side.
//!
//! The server stores (daily ID, date) pairs for diagnosed users in an
//! append-only JSON-lines file and answers two operations over newline-
//! delimited JSON on TCP: authenticated `upload` and cursor-based `sync`
//! that returns only records newer than the client's cursor. The client
//! side pulls the delta, regenerates rolling IDs, and matches them
//! against a local contact log.

use std::io::{BufRead, BufReader, Write};
use std::net::{TcpListener, TcpStream, ToSocketAddrs};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::ids::{match_exposures, ContactRecord, DailyRandomId, ExposureReport};

/// Most records accepted per upload (the retention window, one per day).
pub const MAX_UPLOAD_RECORDS: usize = 14;

#[derive(Debug, Error)]
pub enum ServerError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed store line {line}: {cause}")]
    Corrupt { line: usize, cause: String },
}

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad response: {0}")]
    BadResponse(String),
    #[error("authentication rejected")]
    AuthFailure,
    #[error("server rejected request: {0}")]
    Rejected(String),
}

/// One diagnosed user's daily ID with its date and server-assigned cursor.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PositiveRecord {
    pub drid: String,
    pub date: NaiveDate,
    pub cursor: u64,
}

/// Append-only record store; the cursor is the line number.
#[derive(Debug)]
pub struct Store {
    records: Vec<PositiveRecord>,
    path: Option<PathBuf>,
}

impl Store {
    pub fn in_memory() -> Self {
        Store { records: Vec::new(), path: None }
    }

    /// Open (or create) a JSON-lines backed store.
    pub fn open<P: AsRef<Path>>(path: P) -> Result<Self, ServerError> {
        let path = path.as_ref().to_path_buf();
        let mut records = Vec::new();
        match std::fs::File::open(&path) {
            Ok(file) => {
                for (i, line) in BufReader::new(file).lines().enumerate() {
                    let line = line?;
                    if line.trim().is_empty() {
                        continue;
                    }
                    let rec: PositiveRecord =
                        serde_json::from_str(&line).map_err(|e| ServerError::Corrupt {
                            line: i + 1,
                            cause: e.to_string(),
                        })?;
                    records.push(rec);
                }
            }
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {}
            Err(e) => return Err(e.into()),
        }
        Ok(Store { records, path: Some(path) })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn max_cursor(&self) -> u64 {
        self.records.last().map(|r| r.cursor).unwrap_or(0)
    }

    /// Insert validated (drid, date) pairs, skipping duplicates. Returns
    /// how many were newly stored. The batch was validated up front, so
    /// this cannot partially apply.
    fn insert(&mut self, entries: &[(String, NaiveDate)]) -> Result<usize, ServerError> {
        let mut appended = Vec::new();
        for (drid, date) in entries {
            let duplicate = self
                .records
                .iter()
                .chain(appended.iter())
                .any(|r| &r.drid == drid && &r.date == date);
            if duplicate {
                continue;
            }
            let cursor = self.max_cursor() + appended.len() as u64 + 1;
            appended.push(PositiveRecord {
                drid: drid.clone(),
                date: *date,
                cursor,
            });
        }
        if let (Some(path), false) = (&self.path, appended.is_empty()) {
            let mut file = std::fs::OpenOptions::new()
                .create(true)
                .append(true)
                .open(path)?;
            for rec in &appended {
                serde_json::to_writer(&mut file, rec).map_err(std::io::Error::from)?;
                writeln!(file)?;
            }
            file.sync_data()?;
        }
        let count = appended.len();
        self.records.extend(appended);
        Ok(count)
    }

    /// All records strictly newer than `since`, plus the new cursor.
    pub fn delta(&self, since: u64) -> (Vec<PositiveRecord>, u64) {
        let newer: Vec<PositiveRecord> = self
            .records
            .iter()
            .filter(|r| r.cursor > since)
            .cloned()
            .collect();
        let cursor = newer.last().map(|r| r.cursor).unwrap_or(since);
        (newer, cursor)
    }
}

fn constant_time_eq(a: &str, b: &str) -> bool {
    let a = a.as_bytes();
    let b = b.as_bytes();
    let mut diff = a.len() ^ b.len();
    for i in 0..a.len().max(b.len()) {
        let x = a.get(i).copied().unwrap_or(0);
        let y = b.get(i).copied().unwrap_or(0);
        diff |= (x ^ y) as usize;
    }
    diff == 0
}

fn validate_upload(records: &[serde_json::Value]) -> Result<Vec<(String, NaiveDate)>, String> {
    if records.len() > MAX_UPLOAD_RECORDS {
        return Err(format!(
            "at most {MAX_UPLOAD_RECORDS} records per upload, got {}",
            records.len()
        ));
    }
    let mut out = Vec::with_capacity(records.len());
    for rec in records {
        let drid = rec["drid"]
            .as_str()
            .ok_or_else(|| "record missing drid".to_string())?;
        DailyRandomId::from_hex(drid, 0).map_err(|e| format!("bad drid: {e}"))?;
        let date = rec["date"]
            .as_str()
            .ok_or_else(|| "record missing date".to_string())?;
        let date = NaiveDate::parse_from_str(date, "%Y-%m-%d")
            .map_err(|e| format!("bad date `{date}`: {e}"))?;
        out.push((drid.to_lowercase(), date));
    }
    Ok(out)
}

/// Handle one request line; always produces one response line.
pub fn handle_request(store: &Mutex<Store>, token: &str, line: &str) -> serde_json::Value {
    let request: serde_json::Value = match serde_json::from_str(line) {
        Ok(v) => v,
        Err(e) => return json!({"err": format!("bad json: {e}")}),
    };
    match request["op"].as_str() {
        Some("upload") => {
            let presented = request["token"].as_str().unwrap_or("");
            if !constant_time_eq(presented, token) {
                return json!({"err": "auth-failure"});
            }
            let records = match request["records"].as_array() {
                Some(r) => r,
                None => return json!({"err": "upload needs a records array"}),
            };
            match validate_upload(records) {
                Ok(entries) => {
                    let mut store = store.lock().unwrap();
                    match store.insert(&entries) {
                        Ok(accepted) => json!({"ok": {"accepted": accepted}}),
                        Err(e) => json!({"err": format!("store: {e}")}),
                    }
                }
                Err(e) => json!({"err": format!("invalid-argument: {e}")}),
            }
        }
        Some("sync") => {
            let since = request["since"].as_u64().unwrap_or(0);
            let store = store.lock().unwrap();
            let (records, cursor) = store.delta(since);
            json!({"ok": {"records": records, "cursor": cursor}})
        }
        Some(other) => json!({"err": format!("unknown op `{other}`")}),
        None => json!({"err": "missing op"}),
    }
}

/// Serve connections until the listener fails; each connection may
/// pipeline any number of request lines.
pub fn serve(listener: TcpListener, store: Store, token: String) -> std::io::Result<()> {
    let store = Arc::new(Mutex::new(store));
    let token = Arc::new(token);
    for stream in listener.incoming() {
        let stream = stream?;
        let store = Arc::clone(&store);
        let token = Arc::clone(&token);
        std::thread::spawn(move || {
            if let Err(e) = serve_connection(&store, &token, stream) {
                log::debug!("connection ended: {e}");
            }
        });
    }
    Ok(())
}

fn serve_connection(
    store: &Mutex<Store>,
    token: &str,
    stream: TcpStream,
) -> std::io::Result<()> {
    let mut writer = stream.try_clone()?;
    let reader = BufReader::new(stream);
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let response = handle_request(store, token, &line);
        serde_json::to_writer(&mut writer, &response)?;
        writer.write_all(b"\n")?;
        writer.flush()?;
    }
    Ok(())
}

fn roundtrip(addr: impl ToSocketAddrs, request: &serde_json::Value) -> Result<serde_json::Value, ClientError> {
    let stream = TcpStream::connect(addr)?;
    let mut writer = stream.try_clone()?;
    serde_json::to_writer(&mut writer, request).map_err(std::io::Error::from)?;
    writer.write_all(b"\n")?;
    writer.flush()?;
    let mut reader = BufReader::new(stream);
    let mut line = String::new();
    reader.read_line(&mut line)?;
    let response: serde_json::Value =
        serde_json::from_str(&line).map_err(|e| ClientError::BadResponse(e.to_string()))?;
    if let Some(err) = response["err"].as_str() {
        if err == "auth-failure" {
            return Err(ClientError::AuthFailure);
        }
        return Err(ClientError::Rejected(err.to_string()));
    }
    Ok(response["ok"].clone())
}

/// Upload (drid hex, date) pairs; returns how many the server newly stored.
pub fn upload(
    addr: impl ToSocketAddrs,
    token: &str,
    records: &[(String, NaiveDate)],
) -> Result<usize, ClientError> {
    let request = json!({
        "op": "upload",
        "token": token,
        "records": records
            .iter()
            .map(|(drid, date)| json!({"drid": drid, "date": date.format("%Y-%m-%d").to_string()}))
            .collect::<Vec<_>>(),
    });
    let ok = roundtrip(addr, &request)?;
    ok["accepted"]
        .as_u64()
        .map(|n| n as usize)
        .ok_or_else(|| ClientError::BadResponse("missing accepted count".into()))
}

/// Pull records newer than `since`; returns them with the new cursor.
pub fn sync(
    addr: impl ToSocketAddrs,
    since: u64,
) -> Result<(Vec<PositiveRecord>, u64), ClientError> {
    let ok = roundtrip(addr, &json!({"op": "sync", "since": since}))?;
    let records: Vec<PositiveRecord> = serde_json::from_value(ok["records"].clone())
        .map_err(|e| ClientError::BadResponse(e.to_string()))?;
    let cursor = ok["cursor"]
        .as_u64()
        .ok_or_else(|| ClientError::BadResponse("missing cursor".into()))?;
    Ok((records, cursor))
}

/// Outcome of one fetch-and-match pass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FetchOutcome {
    pub report: ExposureReport,
    pub new_records: usize,
    pub cursor: u64,
}

/// Pull the delta past `cursor`, regenerate rolling IDs for the fetched
/// daily IDs, and match them against the local log. The returned cursor
/// advances only because the transport succeeded; on error the caller
/// keeps its old cursor.
pub fn fetch_and_match(
    addr: impl ToSocketAddrs,
    cursor: u64,
    log: &[ContactRecord],
) -> Result<FetchOutcome, ClientError> {
    let (records, new_cursor) = sync(addr, cursor)?;
    let infected: Vec<DailyRandomId> = records
        .iter()
        .map(|r| {
            DailyRandomId::from_hex(&r.drid, days_since_epoch(r.date))
                .map_err(|e| ClientError::BadResponse(format!("server sent bad drid: {e}")))
        })
        .collect::<Result<_, _>>()?;
    let report = match_exposures(&infected, log);
    Ok(FetchOutcome {
        report,
        new_records: records.len(),
        cursor: new_cursor,
    })
}

/// Day index used for fetched records: days since the Unix epoch.
pub fn days_since_epoch(date: NaiveDate) -> u32 {
    let epoch = NaiveDate::from_ymd_opt(1970, 1, 1).unwrap();
    (date - epoch).num_days().max(0) as u32
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ids::{derive_drid_chain, derive_rpids, ContactLog, Seed};

    fn date(s: &str) -> NaiveDate {
        NaiveDate::parse_from_str(s, "%Y-%m-%d").unwrap()
    }

    fn spawn_server(store: Store, token: &str) -> std::net::SocketAddr {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let token = token.to_string();
        std::thread::spawn(move || serve(listener, store, token));
        addr
    }

    fn drid_hex(seed_byte: u8, day: usize) -> String {
        let chain = derive_drid_chain(&Seed::from_bytes([seed_byte; 32]), day + 1);
        chain[day].to_hex()
    }

    #[test]
    fn upload_dedup_and_auth() {
        let addr = spawn_server(Store::in_memory(), "secret");
        let records: Vec<(String, NaiveDate)> = (0..14)
            .map(|i| (drid_hex(1, i), date("2026-08-01")))
            .collect();
        assert_eq!(upload(addr, "secret", &records).unwrap(), 14);
        assert_eq!(upload(addr, "secret", &records).unwrap(), 0, "idempotent");
        assert!(matches!(
            upload(addr, "wrong", &records),
            Err(ClientError::AuthFailure)
        ));
        // The failed upload must not have stored anything new.
        let (all, cursor) = sync(addr, 0).unwrap();
        assert_eq!(all.len(), 14);
        assert_eq!(cursor, 14);
    }

    #[test]
    fn upload_limits_and_atomicity() {
        let store = Mutex::new(Store::in_memory());
        // 15 records: rejected outright.
        let too_many: Vec<serde_json::Value> = (0..15)
            .map(|i| serde_json::json!({"drid": drid_hex(2, i), "date": "2026-08-01"}))
            .collect();
        let resp = handle_request(
            &store,
            "t",
            &serde_json::json!({"op": "upload", "token": "t", "records": too_many}).to_string(),
        );
        assert!(resp["err"].as_str().unwrap().contains("invalid-argument"));

        // One malformed entry poisons the whole batch.
        let mixed = serde_json::json!({"op": "upload", "token": "t", "records": [
            {"drid": drid_hex(2, 0), "date": "2026-08-01"},
            {"drid": "zz", "date": "2026-08-01"},
        ]});
        let resp = handle_request(&store, "t", &mixed.to_string());
        assert!(resp["err"].as_str().unwrap().contains("invalid-argument"));
        assert_eq!(store.lock().unwrap().len(), 0, "nothing stored");
    }

    #[test]
    fn sync_delta_semantics() {
        let addr = spawn_server(Store::in_memory(), "t");
        let (empty, cursor) = sync(addr, 0).unwrap();
        assert!(empty.is_empty());
        assert_eq!(cursor, 0);

        let first: Vec<(String, NaiveDate)> =
            (0..5).map(|i| (drid_hex(3, i), date("2026-08-02"))).collect();
        upload(addr, "t", &first).unwrap();
        let (all, cursor) = sync(addr, 0).unwrap();
        assert_eq!(all.len(), 5);
        assert_eq!(cursor, 5);

        upload(addr, "t", &[(drid_hex(4, 0), date("2026-08-03"))]).unwrap();
        let (delta, cursor) = sync(addr, 5).unwrap();
        assert_eq!(delta.len(), 1);
        assert_eq!(cursor, 6);
        assert_eq!(delta[0].drid, drid_hex(4, 0));
    }

    #[test]
    fn sync_chunking_reproduces_full_store() {
        let store = Mutex::new(Store::in_memory());
        for i in 0..10 {
            let req = serde_json::json!({"op": "upload", "token": "t", "records": [
                {"drid": drid_hex(5, i), "date": "2026-08-01"}
            ]});
            handle_request(&store, "t", &req.to_string());
        }
        let store = store.into_inner().unwrap();
        let mut collected = Vec::new();
        let mut cursor = 0;
        loop {
            let (chunk, next) = store.delta(cursor);
            if chunk.is_empty() {
                break;
            }
            collected.extend(chunk.into_iter().take(3));
            cursor = collected.last().unwrap().cursor;
            let _ = next;
        }
        assert_eq!(collected.len(), 10);
        let cursors: Vec<u64> = collected.iter().map(|r| r.cursor).collect();
        assert_eq!(cursors, (1..=10).collect::<Vec<u64>>());
    }

    #[test]
    fn store_persists_and_reloads() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("store.jsonl");
        {
            let store = Mutex::new(Store::open(&path).unwrap());
            let req = serde_json::json!({"op": "upload", "token": "t", "records": [
                {"drid": drid_hex(6, 0), "date": "2026-08-01"},
                {"drid": drid_hex(6, 1), "date": "2026-08-02"},
            ]});
            handle_request(&store, "t", &req.to_string());
        }
        let reloaded = Store::open(&path).unwrap();
        assert_eq!(reloaded.len(), 2);
        assert_eq!(reloaded.max_cursor(), 2);
        let (all, _) = reloaded.delta(0);
        assert_eq!(all[1].date, date("2026-08-02"));
    }

    #[test]
    fn fetch_and_match_finds_contact() {
        let seed = Seed::from_bytes([9u8; 32]);
        let drid = &derive_drid_chain(&seed, 1)[0];
        let rpid = &derive_rpids(drid, 8).unwrap()[7];
        let mut log = ContactLog::new();
        log.record(rpid.bytes, 50.0, 1);

        let addr = spawn_server(Store::in_memory(), "t");
        upload(addr, "t", &[(drid.to_hex(), date("2026-08-05"))]).unwrap();

        let outcome = fetch_and_match(addr, 0, log.records()).unwrap();
        assert_eq!(outcome.new_records, 1);
        assert_eq!(outcome.cursor, 1);
        assert_eq!(outcome.report.total_matched, 1);
        assert_eq!(outcome.report.matches[0].slot, 7);
        assert_eq!(
            outcome.report.matches[0].day_index,
            days_since_epoch(date("2026-08-05"))
        );

        // No new uploads: nothing new to process.
        let again = fetch_and_match(addr, outcome.cursor, log.records()).unwrap();
        assert_eq!(again.new_records, 0);
        assert_eq!(again.report.total_matched, 0);
    }

    #[test]
    fn constant_time_eq_basics() {
        assert!(constant_time_eq("abc", "abc"));
        assert!(!constant_time_eq("abc", "abd"));
        assert!(!constant_time_eq("abc", "abcd"));
        assert!(!constant_time_eq("", "a"));
        assert!(constant_time_eq("", ""));
    }
}
