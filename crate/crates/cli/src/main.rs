//! Command-line surface for the tracing stack.
//!
//! Machine-readable results go to stdout, diagnostics to stderr. Exit
//! codes: 0 success, 1 usage, 2 decode/match failure, 3 I/O, 4 auth.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};
use serde_json::json;

use sonotrace::audio::AudioBuffer;
use sonotrace::codec::{chunks_to_payload, frame_to_chunks, DataFrame};
use sonotrace::ids::{derive_drid_chain, derive_rpids, ContactLog, Seed};
use sonotrace::modem::{demodulate, synthesize_frame_with, SynthBackend};
use sonotrace::server::{self, ClientError, Store};
use sonotrace::sim::{
    self, knee_distance, load_preset, run_scenario, scenario_at_distance, sweep_distance,
    sweep_volume, wall_scenario, write_trace_jsonl, SweepConfig, KNEE_THRESHOLD,
};

#[derive(Parser)]
#[command(name = "sonotrace", version, about = "Ultrasonic proximity-tracing toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a fresh 32-byte seed as lowercase hex.
    Keygen {
        /// Write the seed here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the daily-ID chain of a seed, or one day's rolling IDs.
    Derive {
        /// File holding the seed as 64 hex characters.
        #[arg(long)]
        seed: PathBuf,
        /// Chain length in days.
        #[arg(long, default_value_t = 14)]
        days: usize,
        /// Print the 1,440 rolling IDs of this day instead of the chain.
        #[arg(long)]
        rpids: Option<usize>,
    },
    /// Synthesize one rolling-ID frame into a WAV file.
    Encode {
        /// 16-byte payload as 32 hex characters.
        #[arg(long)]
        rpid: String,
        #[arg(long, default_value_t = 0)]
        channel: usize,
        /// Redundant data units per frame (1..=5).
        #[arg(long, default_value_t = 1)]
        units: usize,
        /// Linear volume in [0, 1].
        #[arg(long, default_value_t = 1.0)]
        volume: f64,
        #[arg(long)]
        out: PathBuf,
        /// Synthesis backend: direct | ifft.
        #[arg(long, default_value = "direct")]
        backend: String,
    },
    /// Demodulate a WAV file and print recovered payloads as hex.
    Decode {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, default_value_t = 0)]
        channel: usize,
    },
    /// Run one scenario repetition and print its metrics as JSON.
    Simulate {
        /// Builtin preset name or path to a preset JSON file.
        #[arg(long)]
        preset: String,
        /// Square edge length in feet.
        #[arg(long, default_value_t = 6.0)]
        distance_ft: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 600.0)]
        duration_s: f64,
        #[arg(long, default_value_t = 600.0)]
        rpid_rotation_s: f64,
        /// Speaker volume step 0..=25.
        #[arg(long, default_value_t = 25)]
        volume_level: u32,
        /// Write the protocol trace as JSON lines.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Sweep the tracing rate over square edge lengths; emits CSV.
    Sweep {
        #[arg(long)]
        preset: String,
        /// Comma list ("2,4,6") or inclusive range ("1..15") in feet.
        #[arg(long)]
        distances: String,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 10)]
        reps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 600.0)]
        duration_s: f64,
        #[arg(long, default_value_t = 25)]
        volume_level: u32,
    },
    /// One distance curve per volume level, with knee distances; JSON.
    SweepVolume {
        #[arg(long)]
        preset: String,
        /// Comma list of volume levels (0..=25).
        #[arg(long)]
        levels: String,
        #[arg(long)]
        distances: String,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 10)]
        reps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 600.0)]
        duration_s: f64,
    },
    /// Through-wall comparison against the disk-model baseline; JSON.
    Wall {
        #[arg(long)]
        preset: String,
        #[arg(long, default_value_t = 6.0)]
        side_ft: f64,
        #[arg(long, default_value_t = 40.0)]
        wall_loss_db: f64,
        #[arg(long, default_value_t = 10)]
        reps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 600.0)]
        duration_s: f64,
    },
    /// Bisect a preset's ambient noise so the rate knee lands on target.
    Calibrate {
        #[arg(long)]
        preset: String,
        #[arg(long, default_value_t = 6.0)]
        target_knee_ft: f64,
        /// Distances evaluated per iteration.
        #[arg(long, default_value = "3..10")]
        distances: String,
        #[arg(long, default_value_t = 3)]
        reps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 300.0)]
        duration_s: f64,
        #[arg(long, default_value_t = 0.01)]
        sigma_lo: f64,
        #[arg(long, default_value_t = 0.6)]
        sigma_hi: f64,
        #[arg(long, default_value_t = 7)]
        iterations: usize,
    },
    /// Run the health-authority service.
    Serve {
        /// TCP port; 0 picks a free one (printed on stdout).
        #[arg(long, default_value_t = 0)]
        port: u16,
        /// Append-only JSON-lines store file.
        #[arg(long)]
        store: PathBuf,
        /// Shared upload secret.
        #[arg(long)]
        token: String,
    },
    /// Upload daily IDs of a diagnosed user.
    Upload {
        /// Server address, host:port.
        #[arg(long)]
        addr: String,
        #[arg(long)]
        token: String,
        /// Record as `DRIDHEX:YYYY-MM-DD`; repeatable.
        #[arg(long = "record")]
        records: Vec<String>,
        /// JSON-lines file of {"drid": hex, "date": "YYYY-MM-DD"}.
        #[arg(long)]
        file: Option<PathBuf>,
    },
    /// Pull new infected IDs and match them against a contact log.
    SyncMatch {
        #[arg(long)]
        addr: String,
        /// Contact log as JSON lines.
        #[arg(long)]
        log: PathBuf,
        /// File holding the sync cursor; created when missing.
        #[arg(long)]
        cursor_file: PathBuf,
    },
}

enum Failure {
    Usage(String),
    DecodeMatch(String),
    Io(String),
    Auth(String),
}

impl Failure {
    fn exit_code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::DecodeMatch(_) => 2,
            Failure::Io(_) => 3,
            Failure::Auth(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::DecodeMatch(m) | Failure::Io(m) | Failure::Auth(m) => m,
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Io(e.to_string())
    }
}

impl From<sonotrace::audio::WavError> for Failure {
    fn from(e: sonotrace::audio::WavError) -> Self {
        Failure::Io(e.to_string())
    }
}

impl From<ClientError> for Failure {
    fn from(e: ClientError) -> Self {
        match e {
            ClientError::AuthFailure => Failure::Auth("authentication rejected".into()),
            other => Failure::Io(other.to_string()),
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {}", failure.message());
            ExitCode::from(failure.exit_code())
        }
    }
}

fn run(command: Command) -> Result<(), Failure> {
    match command {
        Command::Keygen { out } => {
            let seed = Seed::generate();
            match out {
                Some(path) => std::fs::write(path, seed.to_hex() + "\n")?,
                None => println!("{}", seed.to_hex()),
            }
            Ok(())
        }
        Command::Derive { seed, days, rpids } => {
            let text = std::fs::read_to_string(&seed)?;
            let seed = Seed::from_hex(text.trim())
                .map_err(|e| Failure::Usage(format!("bad seed file: {e}")))?;
            match rpids {
                None => {
                    for drid in derive_drid_chain(&seed, days) {
                        println!("{}", drid.to_hex());
                    }
                }
                Some(day) => {
                    if day >= days.max(1) {
                        return Err(Failure::Usage(format!(
                            "--rpids {day} outside the {days}-day chain"
                        )));
                    }
                    let chain = derive_drid_chain(&seed, day + 1);
                    let rpids = derive_rpids(&chain[day], sonotrace::ids::RPIDS_PER_DAY)
                        .expect("full day within bounds");
                    for rpid in rpids {
                        println!("{}", rpid.to_hex());
                    }
                }
            }
            Ok(())
        }
        Command::Encode { rpid, channel, units, volume, out, backend } => {
            let payload = parse_hex16(&rpid)?;
            if !(0.0..=1.0).contains(&volume) {
                return Err(Failure::Usage(format!("volume {volume} outside [0, 1]")));
            }
            let params = sonotrace::modem::ModemParams::default();
            if channel >= params.plan.channels {
                return Err(Failure::Usage(format!("channel {channel} out of range")));
            }
            let backend = match backend.as_str() {
                "direct" => SynthBackend::Direct,
                "ifft" => SynthBackend::Ifft,
                other => return Err(Failure::Usage(format!("unknown backend `{other}`"))),
            };
            let frame = DataFrame::new(&payload, units)
                .map_err(|e| Failure::Usage(e.to_string()))?;
            let buffer =
                synthesize_frame_with(&frame_to_chunks(&frame), channel, volume, &params, backend);
            buffer.write_wav(&out)?;
            eprintln!(
                "wrote {} samples ({:.2} s) to {}",
                buffer.len(),
                buffer.duration_seconds(),
                out.display()
            );
            Ok(())
        }
        Command::Decode { input, channel } => {
            let params = sonotrace::modem::ModemParams::default();
            if channel >= params.plan.channels {
                return Err(Failure::Usage(format!("channel {channel} out of range")));
            }
            let buffer = AudioBuffer::read_wav(&input)?;
            let mut decoded = Vec::new();
            for frame in demodulate(&buffer, channel, &params) {
                if let Some(payload) = chunks_to_payload(&frame.chunks) {
                    decoded.push(hex::encode(payload));
                }
            }
            if decoded.is_empty() {
                return Err(Failure::DecodeMatch("no-valid-unit".into()));
            }
            for payload in decoded {
                println!("{payload}");
            }
            Ok(())
        }
        Command::Simulate {
            preset,
            distance_ft,
            seed,
            duration_s,
            rpid_rotation_s,
            volume_level,
            trace,
        } => {
            let cfg = sweep_config(&preset, seed, duration_s, 1, volume_level)?;
            let mut scenario = scenario_at_distance(&cfg, distance_ft);
            scenario.rpid_rotation_s = rpid_rotation_s;
            let report = run_scenario(&scenario)
                .map_err(|e| Failure::Usage(e.to_string()))?;
            if let Some(path) = trace {
                let mut file = std::fs::File::create(path)?;
                write_trace_jsonl(&report.trace, &mut file)?;
            }
            println!("{}", report.to_json_summary());
            Ok(())
        }
        Command::Sweep {
            preset,
            distances,
            out,
            reps,
            seed,
            duration_s,
            volume_level,
        } => {
            let cfg = sweep_config(&preset, seed, duration_s, reps, volume_level)?;
            let distances = parse_distances(&distances)?;
            let points = sweep_distance(&cfg, &distances);
            let csv = sim::points_to_csv(&points);
            write_text_output(out.as_deref(), &csv)?;
            Ok(())
        }
        Command::SweepVolume {
            preset,
            levels,
            distances,
            out,
            reps,
            seed,
            duration_s,
        } => {
            let cfg = sweep_config(&preset, seed, duration_s, reps, 25)?;
            let levels = parse_levels(&levels)?;
            let distances = parse_distances(&distances)?;
            let curves = sweep_volume(&cfg, &levels, &distances);
            let value = json!({
                "knee_threshold": KNEE_THRESHOLD,
                "curves": curves,
            });
            write_text_output(out.as_deref(), &format!("{value:#}\n"))?;
            Ok(())
        }
        Command::Wall {
            preset,
            side_ft,
            wall_loss_db,
            reps,
            seed,
            duration_s,
        } => {
            let cfg = sweep_config(&preset, seed, duration_s, reps, 25)?;
            let report = wall_scenario(&cfg, side_ft, wall_loss_db);
            println!("{}", serde_json::to_string_pretty(&report).unwrap());
            Ok(())
        }
        Command::Calibrate {
            preset,
            target_knee_ft,
            distances,
            reps,
            seed,
            duration_s,
            sigma_lo,
            sigma_hi,
            iterations,
        } => {
            let base = load_preset(&preset).map_err(|e| Failure::Usage(e.to_string()))?;
            let distances = parse_distances(&distances)?;
            let mut lo = sigma_lo;
            let mut hi = sigma_hi;
            let mut best = None;
            for i in 0..iterations {
                let sigma = (lo + hi) / 2.0;
                let mut preset = base.clone();
                preset.ambient_sigma = sigma;
                let mut cfg = SweepConfig::new(preset, seed);
                cfg.duration_s = duration_s;
                cfg.repetitions = reps;
                let points = sweep_distance(&cfg, &distances);
                let knee = knee_distance(&points, KNEE_THRESHOLD);
                eprintln!("iter {i}: sigma {sigma:.4} -> knee {knee} ft");
                if (knee - target_knee_ft).abs() < 1e-9 {
                    best = Some(sigma);
                }
                // The knee shrinks as noise grows.
                if knee > target_knee_ft {
                    lo = sigma;
                } else if knee < target_knee_ft {
                    hi = sigma;
                } else {
                    lo = sigma;
                }
            }
            let sigma = best.unwrap_or((lo + hi) / 2.0);
            let mut tuned = base;
            tuned.ambient_sigma = (sigma * 1000.0).round() / 1000.0;
            println!("{}", serde_json::to_string_pretty(&tuned).unwrap());
            Ok(())
        }
        Command::Serve { port, store, token } => {
            let store = Store::open(&store).map_err(|e| Failure::Io(e.to_string()))?;
            let listener = std::net::TcpListener::bind(("127.0.0.1", port))?;
            println!("listening on {}", listener.local_addr()?);
            std::io::stdout().flush()?;
            server::serve(listener, store, token)?;
            Ok(())
        }
        Command::Upload { addr, token, records, file } => {
            let mut entries = Vec::new();
            for record in &records {
                entries.push(parse_record_arg(record)?);
            }
            if let Some(path) = file {
                for line in std::fs::read_to_string(path)?.lines() {
                    if line.trim().is_empty() {
                        continue;
                    }
                    let value: serde_json::Value = serde_json::from_str(line)
                        .map_err(|e| Failure::Usage(format!("bad record line: {e}")))?;
                    let drid = value["drid"].as_str().unwrap_or_default().to_string();
                    let date = parse_date(value["date"].as_str().unwrap_or_default())?;
                    entries.push((drid, date));
                }
            }
            if entries.is_empty() {
                return Err(Failure::Usage("nothing to upload".into()));
            }
            let accepted = server::upload(&addr, &token, &entries)?;
            println!("{}", json!({ "accepted": accepted }));
            Ok(())
        }
        Command::SyncMatch { addr, log, cursor_file } => {
            let log = match std::fs::File::open(&log) {
                Ok(file) => ContactLog::read_jsonl(std::io::BufReader::new(file))?,
                Err(e) if e.kind() == std::io::ErrorKind::NotFound => ContactLog::new(),
                Err(e) => return Err(e.into()),
            };
            let cursor: u64 = match std::fs::read_to_string(&cursor_file) {
                Ok(text) => text
                    .trim()
                    .parse()
                    .map_err(|_| Failure::Io("cursor file is not a number".into()))?,
                Err(e) if e.kind() == std::io::ErrorKind::NotFound => 0,
                Err(e) => return Err(e.into()),
            };
            let outcome = server::fetch_and_match(&addr, cursor, log.records())?;
            // Advance the cursor only now that the fetch succeeded.
            std::fs::write(&cursor_file, format!("{}\n", outcome.cursor))?;
            println!(
                "{}",
                json!({
                    "matches": outcome.report.total_matched,
                    "new_records": outcome.new_records,
                    "cursor": outcome.cursor,
                    "detail": outcome.report.matches,
                })
            );
            Ok(())
        }
    }
}

fn sweep_config(
    preset: &str,
    seed: u64,
    duration_s: f64,
    reps: usize,
    volume_level: u32,
) -> Result<SweepConfig, Failure> {
    if volume_level > 25 {
        return Err(Failure::Usage(format!("volume level {volume_level} outside 0..=25")));
    }
    let preset = load_preset(preset).map_err(|e| Failure::Usage(e.to_string()))?;
    let mut cfg = SweepConfig::new(preset, seed);
    cfg.duration_s = duration_s;
    cfg.repetitions = reps.max(1);
    cfg.volume_level = volume_level;
    Ok(cfg)
}

fn parse_hex16(s: &str) -> Result<[u8; 16], Failure> {
    let bytes = hex::decode(s.trim())
        .map_err(|e| Failure::Usage(format!("bad hex payload: {e}")))?;
    bytes
        .try_into()
        .map_err(|_| Failure::Usage("payload must be 16 bytes (32 hex chars)".into()))
}

fn parse_distances(spec: &str) -> Result<Vec<f64>, Failure> {
    let spec = spec.trim();
    if spec.is_empty() {
        return Ok(vec![]);
    }
    if let Some((lo, hi)) = spec.split_once("..") {
        let lo: i64 = lo
            .trim()
            .parse()
            .map_err(|_| Failure::Usage(format!("bad range start in `{spec}`")))?;
        let hi: i64 = hi
            .trim()
            .parse()
            .map_err(|_| Failure::Usage(format!("bad range end in `{spec}`")))?;
        if hi < lo {
            return Err(Failure::Usage(format!("empty range `{spec}`")));
        }
        return Ok((lo..=hi).map(|d| d as f64).collect());
    }
    spec.split(',')
        .map(|part| {
            part.trim()
                .parse::<f64>()
                .map_err(|_| Failure::Usage(format!("bad distance `{part}`")))
        })
        .collect()
}

fn parse_levels(spec: &str) -> Result<Vec<u32>, Failure> {
    spec.split(',')
        .map(|part| {
            let level: u32 = part
                .trim()
                .parse()
                .map_err(|_| Failure::Usage(format!("bad level `{part}`")))?;
            if level > 25 {
                return Err(Failure::Usage(format!("level {level} outside 0..=25")));
            }
            Ok(level)
        })
        .collect()
}

fn parse_record_arg(arg: &str) -> Result<(String, chrono::NaiveDate), Failure> {
    let (drid, date) = arg
        .split_once(':')
        .ok_or_else(|| Failure::Usage(format!("record `{arg}` is not DRIDHEX:YYYY-MM-DD")))?;
    Ok((drid.to_string(), parse_date(date)?))
}

fn parse_date(s: &str) -> Result<chrono::NaiveDate, Failure> {
    chrono::NaiveDate::parse_from_str(s.trim(), "%Y-%m-%d")
        .map_err(|e| Failure::Usage(format!("bad date `{s}`: {e}")))
}

fn write_text_output(out: Option<&Path>, text: &str) -> Result<(), Failure> {
    match out {
        Some(path) => {
            std::fs::write(path, text)?;
            eprintln!("wrote {}", path.display());
        }
        None => print!("{text}"),
    }
    Ok(())
}
