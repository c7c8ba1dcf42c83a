//! The multi-node scenario runner.
//!
//! Time advances on a 2048-sample grid. Senders wake on their frame
//! cadence, sense a carrier window rendered at their own position, and
//! emit frames into the shared timeline. Collisions are an oracle: when
//! transmissions overlap on a channel, each affected sender gets a
//! carrier-sense window holding only the *other* nodes' energy, and
//! aborts (truncating its emission) when that window reads busy, since a
//! half-duplex phone cannot hear the channel through its own speaker.
//! Reception happens per merged activity interval: the receiver's view is
//! rendered through the medium, its own airtime is blanked out, and every
//! demodulated payload lands in its contact log.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde_json::json;
use thiserror::Error;

use crate::audio::SAMPLE_RATE;
use crate::codec::{chunks_to_payload, frame_to_chunks, DataFrame};
use crate::ids::{derive_drid_chain, derive_rpids, ContactLog, Seed, RPIDS_PER_DAY};
use crate::mac::{assess_channels, MacParams, MacPhase, Poll, ScanOutcome, Sender};
use crate::medium::{render_window, Scene, Transmission};
use crate::modem::{demodulate, synthesize_frame, ModemParams};

use super::metrics::{MetricsReport, NodeIdentity, TraceEvent};

/// Scheduling quantum in samples.
pub const GRID_SAMPLES: i64 = 2048;

/// Extra rendering margin around each activity interval.
const RX_MARGIN_SAMPLES: i64 = 6 * GRID_SAMPLES;

/// How long a sender keeps emitting after its collision window.
const REACTION_SAMPLES: i64 = GRID_SAMPLES;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("group metrics need at least 2 nodes, got {0}")]
    TooFewNodes(usize),
    #[error("invalid scenario: {0}")]
    InvalidConfig(String),
}

/// Everything one simulated run needs.
#[derive(Debug, Clone)]
pub struct ScenarioConfig {
    pub scene: Scene,
    pub duration_s: f64,
    /// How long one rolling ID stays on the air before rotating.
    pub rpid_rotation_s: f64,
    pub rng_seed: u64,
    /// Speaker volume step 0..=25, scaling every node's volume by
    /// `level / 25`.
    pub volume_level: u32,
    pub modem: ModemParams,
    pub mac: MacParams,
    /// Force every node's first frame to one instant (collision tests);
    /// default is a uniform draw over the first minute.
    pub first_frame_at: Option<f64>,
}

impl ScenarioConfig {
    pub fn new(scene: Scene, rng_seed: u64) -> Self {
        ScenarioConfig {
            scene,
            duration_s: 600.0,
            rpid_rotation_s: 600.0,
            rng_seed,
            volume_level: 25,
            modem: ModemParams::default(),
            mac: MacParams::default(),
            first_frame_at: None,
        }
    }
}

struct TxRecord {
    node_idx: usize,
    channel: usize,
    start: i64,
    samples: Vec<f32>,
    completed: bool,
    aborted: bool,
}

impl TxRecord {
    fn end(&self) -> i64 {
        self.start + self.samples.len() as i64
    }
}

fn snap_up(x: i64) -> i64 {
    x.div_euclid(GRID_SAMPLES) * GRID_SAMPLES
        + if x.rem_euclid(GRID_SAMPLES) == 0 { 0 } else { GRID_SAMPLES }
}

fn to_samples(seconds: f64) -> i64 {
    snap_up((seconds * SAMPLE_RATE as f64).ceil() as i64)
}

fn to_seconds(samples: i64) -> f64 {
    samples as f64 / SAMPLE_RATE as f64
}

fn mix(a: u64, b: u64) -> u64 {
    let mut z = a ^ b.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Run one repetition of a scenario.
pub fn run_scenario(config: &ScenarioConfig) -> Result<MetricsReport, SimError> {
    config.scene.validate().map_err(SimError::InvalidConfig)?;
    let n = config.scene.nodes.len();
    if n < 2 {
        return Err(SimError::TooFewNodes(n));
    }
    if config.volume_level > 25 {
        return Err(SimError::InvalidConfig(format!(
            "volume level {} outside 0..=25",
            config.volume_level
        )));
    }
    if config.duration_s <= 0.0 || config.rpid_rotation_s <= 0.0 {
        return Err(SimError::InvalidConfig("non-positive duration".into()));
    }
    config.modem.validate();

    let duration = to_samples(config.duration_s);
    let volume_scale = config.volume_level as f64 / 25.0;

    // Per-node identity schedules for the run.
    let mut master = ChaCha8Rng::seed_from_u64(mix(config.rng_seed, 0xA11C_E5ED));
    let rotations = ((config.duration_s / config.rpid_rotation_s).ceil() as usize)
        .clamp(1, RPIDS_PER_DAY);
    let identities: Vec<NodeIdentity> = config
        .scene
        .nodes
        .iter()
        .map(|node| {
            let mut bytes = [0u8; 32];
            master.fill(&mut bytes);
            let drid = derive_drid_chain(&Seed::from_bytes(bytes), 1).remove(0);
            let rpids = derive_rpids(&drid, rotations).expect("rotation count within a day");
            NodeIdentity {
                node_id: node.id,
                drid,
                rpids,
            }
        })
        .collect();
    let owner_of_rpid: std::collections::HashMap<[u8; 16], usize> = identities
        .iter()
        .enumerate()
        .flat_map(|(idx, ident)| ident.rpids.iter().map(move |r| (r.bytes, idx)))
        .collect();

    // Senders and their wake times.
    let mut first_due_rng = ChaCha8Rng::seed_from_u64(mix(config.rng_seed, 0xF127));
    let mut senders: Vec<Sender> = config
        .scene
        .nodes
        .iter()
        .map(|node| {
            let due = config
                .first_frame_at
                .unwrap_or_else(|| first_due_rng.gen_range(5.0..65.0));
            Sender::new(node.id, config.mac.clone(), due, mix(config.rng_seed, node.id as u64))
        })
        .collect();
    let mut wake: Vec<i64> = senders
        .iter()
        .map(|s| to_samples(s.next_frame_due()))
        .collect();

    let mut txs: Vec<TxRecord> = Vec::new();
    let mut trace: Vec<TraceEvent> = Vec::new();

    loop {
        let next_wake = wake.iter().copied().min().unwrap_or(i64::MAX);
        let next_end = txs
            .iter()
            .filter(|t| !t.completed)
            .map(|t| snap_up(t.end()))
            .min()
            .unwrap_or(i64::MAX);
        let now = next_wake.min(next_end);
        if now >= duration || now == i64::MAX {
            break;
        }
        let now_s = to_seconds(now);

        // Finish transmissions.
        for ti in 0..txs.len() {
            if !txs[ti].completed && snap_up(txs[ti].end()) <= now {
                txs[ti].completed = true;
                let idx = txs[ti].node_idx;
                senders[idx].on_tx_complete(to_seconds(txs[ti].end()));
                trace.push(TraceEvent::new(
                    to_seconds(txs[ti].end()),
                    config.scene.nodes[idx].id,
                    "tx_done",
                    json!({"channel": txs[ti].channel}),
                ));
                wake[idx] = to_samples(senders[idx].next_frame_due());
            }
        }

        // Poll due senders.
        for idx in 0..n {
            if wake[idx] > now || senders[idx].state.phase == MacPhase::Transmitting {
                continue;
            }
            match senders[idx].poll(now_s) {
                Poll::Sleep { until } => {
                    wake[idx] = if until.is_finite() { to_samples(until) } else { i64::MAX };
                }
                Poll::NeedAssessment => {
                    let node_id = config.scene.nodes[idx].id;
                    let foreign = gather_transmissions(&txs, &config.scene, Some(idx), now, GRID_SAMPLES);
                    let window = render_window(
                        &config.scene,
                        node_id,
                        &foreign,
                        now,
                        GRID_SAMPLES as usize,
                        config.rng_seed,
                    );
                    let assessment = assess_channels(&window, 0, &config.modem, &config.mac);
                    trace.push(TraceEvent::new(
                        now_s,
                        node_id,
                        "scan",
                        json!({
                            "states": assessment.channels.iter().map(|c| format!("{:?}", c.state)).collect::<Vec<_>>(),
                        }),
                    ));
                    let units_before = senders[idx].state.unit_count;
                    match senders[idx].on_assessment(now_s, &assessment) {
                        ScanOutcome::WaitRetry { until } => {
                            wake[idx] = to_samples(until);
                        }
                        ScanOutcome::Transmit { channel, unit_count } => {
                            if unit_count > units_before {
                                trace.push(TraceEvent::new(
                                    now_s,
                                    node_id,
                                    "noisy",
                                    json!({"unit_count": unit_count}),
                                ));
                            }
                            let start = now + GRID_SAMPLES;
                            let rotation = (to_seconds(start) / config.rpid_rotation_s) as usize;
                            let rpid =
                                &identities[idx].rpids[rotation.min(identities[idx].rpids.len() - 1)];
                            let frame = DataFrame::new(&rpid.bytes, unit_count)
                                .expect("unit count within bounds");
                            let volume = config.scene.nodes[idx].volume * volume_scale;
                            let wave = synthesize_frame(
                                &frame_to_chunks(&frame),
                                channel,
                                volume,
                                &config.modem,
                            );
                            trace.push(TraceEvent::new(
                                to_seconds(start),
                                node_id,
                                "tx_start",
                                json!({
                                    "channel": channel,
                                    "unit_count": unit_count,
                                    "rpid": rpid.to_hex(),
                                }),
                            ));
                            txs.push(TxRecord {
                                node_idx: idx,
                                channel,
                                start,
                                samples: wave.samples,
                                completed: false,
                                aborted: false,
                            });
                            wake[idx] = i64::MAX;
                            check_collisions(
                                &mut txs,
                                &mut senders,
                                &mut wake,
                                &mut trace,
                                config,
                                start,
                            );
                        }
                    }
                }
            }
        }
    }

    // Reception: per channel, demodulate every merged activity interval at
    // every receiver.
    let channels = config.modem.plan.channels;
    let per_rx: Vec<(Vec<u32>, ContactLog, usize)> = (0..n)
        .into_par_iter()
        .map(|rx_idx| {
            let rx_id = config.scene.nodes[rx_idx].id;
            let mut delivery = vec![0u32; n];
            let mut log = ContactLog::new();
            let mut phantoms = 0usize;
            for channel in 0..channels {
                let intervals = merge_intervals(
                    txs.iter()
                        .filter(|t| t.channel == channel && !t.samples.is_empty())
                        .map(|t| (t.start - RX_MARGIN_SAMPLES, t.end() + RX_MARGIN_SAMPLES))
                        .collect(),
                );
                for (iv_start, iv_end) in intervals {
                    let iv_start = iv_start.max(0);
                    let len = (iv_end - iv_start) as usize;
                    let foreign =
                        gather_transmissions(&txs, &config.scene, Some(rx_idx), iv_start, iv_end - iv_start);
                    let mut heard = render_window(
                        &config.scene,
                        rx_id,
                        &foreign,
                        iv_start,
                        len,
                        config.rng_seed,
                    );
                    blank_own_airtime(&mut heard, &txs, rx_idx, iv_start);
                    for frame in demodulate(&heard, channel, &config.modem) {
                        let Some(payload) = chunks_to_payload(&frame.chunks) else {
                            continue;
                        };
                        match owner_of_rpid.get(&payload) {
                            None => phantoms += 1,
                            Some(&owner) if owner == rx_idx => {}
                            Some(&owner) => {
                                delivery[owner] += 1;
                                let t_heard = to_seconds(iv_start + frame.start as i64);
                                log.record(payload, t_heard, channel as u8);
                            }
                        }
                    }
                }
            }
            (delivery, log, phantoms)
        })
        .collect();

    let mut delivery = Vec::with_capacity(n);
    let mut contact_logs = Vec::with_capacity(n);
    let mut phantom_decodes = 0;
    for (row, log, phantoms) in per_rx {
        delivery.push(row);
        contact_logs.push(log);
        phantom_decodes += phantoms;
    }
    let node_ids: Vec<u32> = config.scene.nodes.iter().map(|n| n.id).collect();
    Ok(MetricsReport::from_delivery(
        &node_ids,
        delivery,
        phantom_decodes,
        trace,
        contact_logs,
        identities,
    ))
}

/// Run `reps` repetitions with per-repetition derived seeds, in parallel.
pub fn run_repetitions(config: &ScenarioConfig, reps: usize) -> Vec<MetricsReport> {
    (0..reps)
        .into_par_iter()
        .map(|rep| {
            let mut c = config.clone();
            c.rng_seed = mix(config.rng_seed, 0xBEEF_0000 + rep as u64);
            run_scenario(&c).expect("repetition config is valid")
        })
        .collect()
}

/// Active transmissions overlapping `[start, start + len)`, excluding
/// `skip_idx`'s own.
fn gather_transmissions<'a>(
    txs: &'a [TxRecord],
    scene: &Scene,
    skip_idx: Option<usize>,
    start: i64,
    len: i64,
) -> Vec<Transmission<'a>> {
    // Arrival can lag emission by propagation delay; widen the overlap
    // test generously rather than computing per-pair delays here.
    const DELAY_SLACK: i64 = 8192;
    txs.iter()
        .filter(|t| Some(t.node_idx) != skip_idx)
        .filter(|t| t.start < start + len && t.end() + DELAY_SLACK > start)
        .map(|t| Transmission {
            tx_id: scene.nodes[t.node_idx].id,
            start_sample: t.start,
            samples: &t.samples,
        })
        .collect()
}

/// Apply the collision oracle at a transmission start: every sender whose
/// channel now carries detectable foreign energy aborts and backs off.
fn check_collisions(
    txs: &mut [TxRecord],
    senders: &mut [Sender],
    wake: &mut [i64],
    trace: &mut Vec<TraceEvent>,
    config: &ScenarioConfig,
    now: i64,
) {
    let channel_of = |t: &TxRecord| t.channel;
    let active: Vec<usize> = (0..txs.len())
        .filter(|&i| !txs[i].completed && !txs[i].aborted && txs[i].start <= now + GRID_SAMPLES && txs[i].end() > now)
        .collect();
    for &ti in &active {
        let channel = channel_of(&txs[ti]);
        let me = txs[ti].node_idx;
        let has_rival = active
            .iter()
            .any(|&o| o != ti && txs[o].channel == channel && txs[o].node_idx != me);
        if !has_rival {
            continue;
        }
        let foreign: Vec<Transmission<'_>> = active
            .iter()
            .filter(|&&o| txs[o].node_idx != me && txs[o].channel == channel)
            .map(|&o| Transmission {
                tx_id: config.scene.nodes[txs[o].node_idx].id,
                start_sample: txs[o].start,
                samples: &txs[o].samples,
            })
            .collect();
        let heard = render_window(
            &config.scene,
            config.scene.nodes[me].id,
            &foreign,
            now,
            GRID_SAMPLES as usize,
            config.rng_seed,
        );
        let assessment = assess_channels(&heard, 0, &config.modem, &config.mac);
        if assessment.channels[channel].state == crate::mac::ChannelState::Busy {
            let cut = ((now + REACTION_SAMPLES) - txs[ti].start).clamp(0, txs[ti].samples.len() as i64);
            txs[ti].samples.truncate(cut as usize);
            txs[ti].aborted = true;
            txs[ti].completed = true;
            let t_abort = to_seconds(now + REACTION_SAMPLES);
            senders[me].on_collision(t_abort);
            wake[me] = to_samples(senders[me].state.backoff_until);
            trace.push(TraceEvent::new(
                t_abort,
                config.scene.nodes[me].id,
                "collision",
                json!({"channel": channel, "count": senders[me].state.collision_count}),
            ));
            trace.push(TraceEvent::new(
                t_abort,
                config.scene.nodes[me].id,
                "backoff",
                json!({"until": senders[me].state.backoff_until}),
            ));
        }
    }
}

fn blank_own_airtime(buffer: &mut crate::audio::AudioBuffer, txs: &[TxRecord], rx_idx: usize, window_start: i64) {
    for tx in txs.iter().filter(|t| t.node_idx == rx_idx) {
        let from = (tx.start - REACTION_SAMPLES - window_start).max(0) as usize;
        let to = ((tx.end() + REACTION_SAMPLES - window_start).max(0) as usize).min(buffer.len());
        if from < to {
            buffer.samples[from..to].fill(0.0);
        }
    }
}

fn merge_intervals(mut intervals: Vec<(i64, i64)>) -> Vec<(i64, i64)> {
    intervals.sort_unstable();
    let mut merged: Vec<(i64, i64)> = Vec::with_capacity(intervals.len());
    for (start, end) in intervals {
        match merged.last_mut() {
            Some(last) if start <= last.1 => last.1 = last.1.max(end),
            _ => merged.push((start, end)),
        }
    }
    merged
}
