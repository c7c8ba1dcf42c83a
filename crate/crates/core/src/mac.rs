//! Per-node broadcast protocol.
//!
//! A sender wakes on its frame cadence, assesses both channels, and picks
//! a free one at random. A channel that is merely noisy is still used, but
//! only after raising the frame's unit count, trading airtime for
//! redundancy. Collisions sensed during a transmission abandon it and
//! trigger binary exponential backoff (capped at 2^5 slots of 12 s).
//! Five clean transmissions in a row let the unit count decay again.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::audio::AudioBuffer;
use crate::codec::MAX_UNITS;
use crate::modem::{self, ModemParams, ToneGroup};

/// Backoff slot length in seconds, sized to one worst-case frame airtime
/// plus margin.
pub const BACKOFF_SLOT_SECONDS: f64 = 12.0;

/// Backoff window cap: collision counts beyond this stop widening the
/// window (2^5 = 32 slots).
pub const BACKOFF_CAP_EXP: u32 = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MacParams {
    /// Absolute candidate-tone RMS above which a channel reads busy even
    /// on a silent floor.
    pub busy_abs_min: f64,
    /// Busy when candidate RMS exceeds this multiple of the guard floor.
    pub busy_factor: f64,
    /// Noisy when the guard-floor magnitude exceeds this.
    pub noise_threshold: f64,
    /// Rescan wait when every channel is busy, seconds.
    pub slot_seconds: f64,
    /// Uniform frame cadence bounds, seconds.
    pub frame_interval: (f64, f64),
    /// Clean transmissions before the unit count decays by one.
    pub unit_decay_streak: u32,
}

impl Default for MacParams {
    fn default() -> Self {
        MacParams {
            busy_abs_min: 0.002,
            busy_factor: 4.0,
            noise_threshold: 0.003,
            slot_seconds: BACKOFF_SLOT_SECONDS,
            frame_interval: (50.0, 70.0),
            unit_decay_streak: 5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelState {
    Free,
    Busy,
    Noisy,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelVerdict {
    pub state: ChannelState,
    /// RMS tone magnitude over the channel's 36 candidate frequencies.
    pub candidate_rms: f64,
    /// Median guard-band magnitude.
    pub guard_floor: f64,
}

/// One carrier-sense pass over every channel.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelAssessment {
    pub channels: Vec<ChannelVerdict>,
}

impl ChannelAssessment {
    pub fn free_channels(&self) -> Vec<usize> {
        self.indices_in(ChannelState::Free)
    }

    pub fn noisy_channels(&self) -> Vec<usize> {
        self.indices_in(ChannelState::Noisy)
    }

    fn indices_in(&self, state: ChannelState) -> Vec<usize> {
        self.channels
            .iter()
            .enumerate()
            .filter(|(_, v)| v.state == state)
            .map(|(i, _)| i)
            .collect()
    }
}

/// Assess every channel over one analysis window starting at `start`.
///
/// Peer frames are sensed as RMS magnitude at the channel's candidate tone
/// frequencies; the plan's 46.875 Hz grid makes those orthogonal across
/// channels within the window, so an adjacent-channel frame does not mask
/// a distant same-channel one. Broadband noise shows up on the guard bins
/// instead.
pub fn assess_channels(
    buffer: &AudioBuffer,
    start: usize,
    modem_params: &ModemParams,
    mac_params: &MacParams,
) -> ChannelAssessment {
    assert!(start + modem_params.fft_size <= buffer.len(), "window exceeds buffer");
    let window = &buffer.samples[start..start + modem_params.fft_size];
    let channels = (0..modem_params.plan.channels)
        .map(|ch| {
            let mut freqs = modem_params.plan.candidate_frequencies(ch, ToneGroup::Low);
            freqs.extend(modem_params.plan.candidate_frequencies(ch, ToneGroup::High));
            let mags = modem::tone_magnitudes(window, &freqs);
            let candidate_rms =
                (mags.iter().map(|m| m * m).sum::<f64>() / mags.len() as f64).sqrt();
            let guard_floor = modem::guard_floor(buffer, ch, start, modem_params);
            let busy_threshold = mac_params
                .busy_abs_min
                .max(mac_params.busy_factor * guard_floor);
            let state = if candidate_rms > busy_threshold {
                ChannelState::Busy
            } else if guard_floor > mac_params.noise_threshold {
                ChannelState::Noisy
            } else {
                ChannelState::Free
            };
            ChannelVerdict {
                state,
                candidate_rms,
                guard_floor,
            }
        })
        .collect();
    ChannelAssessment { channels }
}

/// Pick uniformly among free channels; `None` when none are free.
pub fn choose_channel<R: Rng>(assessment: &ChannelAssessment, rng: &mut R) -> Option<usize> {
    let free = assessment.free_channels();
    if free.is_empty() {
        None
    } else {
        Some(free[rng.gen_range(0..free.len())])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MacPhase {
    Idle,
    Scanning,
    Transmitting,
    Backoff,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MacState {
    pub phase: MacPhase,
    pub collision_count: u32,
    pub unit_count: usize,
    pub backoff_until: f64,
    pub current_channel: Option<usize>,
    clean_streak: u32,
}

impl Default for MacState {
    fn default() -> Self {
        MacState {
            phase: MacPhase::Idle,
            collision_count: 0,
            unit_count: 1,
            backoff_until: 0.0,
            current_channel: None,
            clean_streak: 0,
        }
    }
}

/// Collision sensed mid-transmission: abandon, count it, and back off a
/// uniform number of slots in `[0, 2^min(count, 5))`.
pub fn on_collision<R: Rng>(state: &mut MacState, now: f64, params: &MacParams, rng: &mut R) {
    debug_assert_eq!(state.phase, MacPhase::Transmitting);
    state.collision_count += 1;
    state.clean_streak = 0;
    let window = 1u64 << state.collision_count.min(BACKOFF_CAP_EXP);
    let slots = rng.gen_range(0..window);
    state.backoff_until = now + slots as f64 * params.slot_seconds;
    state.phase = MacPhase::Backoff;
    state.current_channel = None;
}

/// Noisy channel: grow the frame's redundancy, saturating at 5 units.
pub fn on_noisy_channel(state: &mut MacState) {
    state.unit_count = (state.unit_count + 1).min(MAX_UNITS);
}

/// Clean transmission: reset the collision counter; after enough clean
/// frames in a row, shed one unit of redundancy.
pub fn on_success(state: &mut MacState, params: &MacParams) {
    state.collision_count = 0;
    state.clean_streak += 1;
    if state.clean_streak >= params.unit_decay_streak {
        state.unit_count = state.unit_count.saturating_sub(1).max(1);
        state.clean_streak = 0;
    }
}

/// What a polled sender wants from the simulator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Poll {
    /// Nothing to do before this time.
    Sleep { until: f64 },
    /// The sender wants a carrier-sense window now.
    NeedAssessment,
}

/// Outcome of handing an assessment to a scanning sender.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScanOutcome {
    /// Start emitting a frame with `unit_count` units on `channel`.
    Transmit { channel: usize, unit_count: usize },
    /// Every channel busy; wait one slot and rescan.
    WaitRetry { until: f64 },
}

/// The per-node sender state machine. The simulator owns the clock and
/// the medium; the sender owns the protocol decisions.
#[derive(Debug, Clone)]
pub struct Sender {
    pub node_id: u32,
    pub state: MacState,
    pub params: MacParams,
    rng: ChaCha8Rng,
    next_frame_due: f64,
}

impl Sender {
    pub fn new(node_id: u32, params: MacParams, first_frame_due: f64, rng_seed: u64) -> Self {
        Sender {
            node_id,
            state: MacState::default(),
            params,
            rng: ChaCha8Rng::seed_from_u64(rng_seed),
            next_frame_due: first_frame_due,
        }
    }

    pub fn next_frame_due(&self) -> f64 {
        self.next_frame_due
    }

    /// Ask the sender what it needs at time `now`. Never called while
    /// transmitting.
    pub fn poll(&mut self, now: f64) -> Poll {
        match self.state.phase {
            MacPhase::Idle => {
                if now >= self.next_frame_due {
                    self.state.phase = MacPhase::Scanning;
                    Poll::NeedAssessment
                } else {
                    Poll::Sleep { until: self.next_frame_due }
                }
            }
            MacPhase::Scanning => Poll::NeedAssessment,
            MacPhase::Backoff => {
                if now >= self.state.backoff_until {
                    self.state.phase = MacPhase::Scanning;
                    Poll::NeedAssessment
                } else {
                    Poll::Sleep { until: self.state.backoff_until }
                }
            }
            MacPhase::Transmitting => Poll::Sleep { until: f64::INFINITY },
        }
    }

    /// Feed the scanning sender a carrier-sense result.
    pub fn on_assessment(&mut self, now: f64, assessment: &ChannelAssessment) -> ScanOutcome {
        debug_assert_eq!(self.state.phase, MacPhase::Scanning);
        if let Some(channel) = choose_channel(assessment, &mut self.rng) {
            self.start_transmit(channel)
        } else {
            let noisy = assessment.noisy_channels();
            if noisy.is_empty() {
                // All busy: hold off one slot, then rescan.
                ScanOutcome::WaitRetry { until: now + self.params.slot_seconds }
            } else {
                // Noisy but not occupied: usable after growing redundancy.
                on_noisy_channel(&mut self.state);
                let channel = noisy[self.rng.gen_range(0..noisy.len())];
                self.start_transmit(channel)
            }
        }
    }

    fn start_transmit(&mut self, channel: usize) -> ScanOutcome {
        self.state.phase = MacPhase::Transmitting;
        self.state.current_channel = Some(channel);
        ScanOutcome::Transmit {
            channel,
            unit_count: self.state.unit_count,
        }
    }

    /// Collision feedback from the simulator during airtime.
    pub fn on_collision(&mut self, now: f64) {
        on_collision(&mut self.state, now, &self.params.clone(), &mut self.rng);
    }

    /// The frame finished without a sensed collision.
    pub fn on_tx_complete(&mut self, now: f64) {
        debug_assert_eq!(self.state.phase, MacPhase::Transmitting);
        on_success(&mut self.state, &self.params);
        self.state.phase = MacPhase::Idle;
        self.state.current_channel = None;
        let (lo, hi) = self.params.frame_interval;
        self.next_frame_due = now + self.rng.gen_range(lo..hi);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::{frame_to_chunks, DataFrame};
    use crate::medium::{render_at_receiver, NodeConfig, NoiseKind, NoiseSource, Scene};
    use crate::modem::synthesize_frame;

    fn assessment(states: &[ChannelState]) -> ChannelAssessment {
        ChannelAssessment {
            channels: states
                .iter()
                .map(|&state| ChannelVerdict {
                    state,
                    candidate_rms: 0.0,
                    guard_floor: 0.0,
                })
                .collect(),
        }
    }

    #[test]
    fn silence_reads_free_on_both_channels() {
        let modem_params = ModemParams::default();
        let mac_params = MacParams::default();
        let buf = AudioBuffer::silence(2048);
        let a = assess_channels(&buf, 0, &modem_params, &mac_params);
        assert_eq!(a.channels.len(), 2);
        assert!(a.channels.iter().all(|c| c.state == ChannelState::Free));
    }

    #[test]
    fn active_frame_reads_busy_only_on_its_channel() {
        let modem_params = ModemParams::default();
        let mac_params = MacParams::default();
        let chunks = frame_to_chunks(&DataFrame::new(&[0x9Du8; 16], 1).unwrap());
        let buf = synthesize_frame(&chunks, 0, 1.0, &modem_params);
        let a = assess_channels(&buf, 4096 + 1024, &modem_params, &mac_params);
        assert_eq!(a.channels[0].state, ChannelState::Busy);
        assert_eq!(a.channels[1].state, ChannelState::Free, "{a:?}");

        // A weak same-channel frame still reads busy while the other
        // channel carries a loud one.
        let weak = synthesize_frame(&chunks, 1, 1.0, &modem_params);
        let mut mix = AudioBuffer::silence(buf.len());
        mix.mix_at(0, &buf.samples, 0.05);
        mix.mix_at(0, &weak.samples, 1.0);
        let a = assess_channels(&mix, 4096 + 1024, &modem_params, &mac_params);
        assert_eq!(a.channels[0].state, ChannelState::Busy);
        assert_eq!(a.channels[1].state, ChannelState::Busy);
    }

    #[test]
    fn wideband_noise_reads_noisy() {
        let modem_params = ModemParams::default();
        let mac_params = MacParams::default();
        let scene = Scene {
            nodes: vec![
                NodeConfig {
                    id: 0,
                    position: (0.0, 0.0),
                    volume: 1.0,
                    occlusion_db: 0.0,
                    rx_noise_floor: 0.0,
                },
            ],
            noise_sources: vec![NoiseSource {
                position: (0.0, 0.3),
                kind: NoiseKind::White,
                level: 0.15,
            }],
            ..Default::default()
        };
        let buf = render_at_receiver(&scene, 0, &[], 4096, 42);
        let a = assess_channels(&buf, 0, &modem_params, &mac_params);
        assert!(
            a.channels.iter().all(|c| c.state == ChannelState::Noisy),
            "{a:?}"
        );
    }

    #[test]
    fn choose_channel_uniform_over_free() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let both = assessment(&[ChannelState::Free, ChannelState::Free]);
        let picks: Vec<Option<usize>> = (0..10).map(|_| choose_channel(&both, &mut rng)).collect();
        let mut rng2 = ChaCha8Rng::seed_from_u64(5);
        let picks2: Vec<Option<usize>> = (0..10).map(|_| choose_channel(&both, &mut rng2)).collect();
        assert_eq!(picks, picks2, "seeded choice must reproduce");
        assert!(picks.contains(&Some(0)) && picks.contains(&Some(1)));

        let only1 = assessment(&[ChannelState::Busy, ChannelState::Free]);
        assert_eq!(choose_channel(&only1, &mut rng), Some(1));
        let none = assessment(&[ChannelState::Busy, ChannelState::Noisy]);
        assert_eq!(choose_channel(&none, &mut rng), None);
    }

    #[test]
    fn collision_backoff_distribution() {
        let params = MacParams::default();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        // First collision: window 2^1, support {0, 1} slots.
        let mut seen = std::collections::HashSet::new();
        for _ in 0..1000 {
            let mut state = MacState {
                phase: MacPhase::Transmitting,
                ..Default::default()
            };
            on_collision(&mut state, 100.0, &params, &mut rng);
            assert_eq!(state.collision_count, 1);
            assert_eq!(state.phase, MacPhase::Backoff);
            let slots = ((state.backoff_until - 100.0) / params.slot_seconds).round() as u64;
            seen.insert(slots);
        }
        assert_eq!(seen, [0u64, 1].into_iter().collect());

        // Sixth collision: window capped at 2^5, support {0..31}.
        let mut seen = std::collections::HashSet::new();
        for _ in 0..5000 {
            let mut state = MacState {
                phase: MacPhase::Transmitting,
                collision_count: 5,
                ..Default::default()
            };
            on_collision(&mut state, 0.0, &params, &mut rng);
            assert_eq!(state.collision_count, 6);
            let slots = (state.backoff_until / params.slot_seconds).round() as u64;
            assert!(slots < 32);
            seen.insert(slots);
        }
        assert_eq!(seen.len(), 32);

        // Far beyond the cap the window still never exceeds 2^5 slots.
        for _ in 0..1000 {
            let mut state = MacState {
                phase: MacPhase::Transmitting,
                collision_count: 40,
                ..Default::default()
            };
            on_collision(&mut state, 0.0, &params, &mut rng);
            assert!(state.backoff_until <= 31.0 * params.slot_seconds + 1e-9);
        }
    }

    #[test]
    fn noisy_grows_units_and_saturates() {
        let mut state = MacState::default();
        on_noisy_channel(&mut state);
        assert_eq!(state.unit_count, 2);
        let mut state = MacState { unit_count: 5, ..Default::default() };
        on_noisy_channel(&mut state);
        assert_eq!(state.unit_count, 5);
        let mut state = MacState::default();
        for _ in 0..3 {
            on_noisy_channel(&mut state);
        }
        assert_eq!(state.unit_count, 4);
    }

    #[test]
    fn success_resets_collisions_and_decays_units() {
        let params = MacParams::default();
        let mut state = MacState {
            collision_count: 3,
            unit_count: 4,
            ..Default::default()
        };
        on_success(&mut state, &params);
        assert_eq!(state.collision_count, 0);
        assert_eq!(state.unit_count, 4);
        for _ in 0..4 {
            on_success(&mut state, &params);
        }
        assert_eq!(state.unit_count, 3, "decay after 5 clean frames");
        // unit_count never drops below 1
        let mut state = MacState::default();
        for _ in 0..50 {
            on_success(&mut state, &params);
        }
        assert_eq!(state.unit_count, 1);
    }

    #[test]
    fn sender_full_cycle() {
        let params = MacParams::default();
        let mut sender = Sender::new(7, params, 10.0, 99);
        assert_eq!(sender.poll(0.0), Poll::Sleep { until: 10.0 });
        assert_eq!(sender.poll(10.0), Poll::NeedAssessment);

        // All busy: wait a slot, still scanning afterward.
        let busy = assessment(&[ChannelState::Busy, ChannelState::Busy]);
        match sender.on_assessment(10.0, &busy) {
            ScanOutcome::WaitRetry { until } => assert_eq!(until, 10.0 + BACKOFF_SLOT_SECONDS),
            other => panic!("expected retry, got {other:?}"),
        }
        assert_eq!(sender.poll(22.0), Poll::NeedAssessment);

        // Free channel: transmit, then a collision backs off and retries.
        let free = assessment(&[ChannelState::Free, ChannelState::Busy]);
        match sender.on_assessment(22.0, &free) {
            ScanOutcome::Transmit { channel, unit_count } => {
                assert_eq!(channel, 0);
                assert_eq!(unit_count, 1);
            }
            other => panic!("expected transmit, got {other:?}"),
        }
        sender.on_collision(25.0);
        assert_eq!(sender.state.phase, MacPhase::Backoff);
        assert_eq!(sender.state.collision_count, 1);
        let until = sender.state.backoff_until;
        assert!(until >= 25.0);
        assert_eq!(sender.poll(until), Poll::NeedAssessment);

        // Noisy-only assessment bumps units and still transmits.
        let noisy = assessment(&[ChannelState::Noisy, ChannelState::Busy]);
        match sender.on_assessment(until, &noisy) {
            ScanOutcome::Transmit { channel, unit_count } => {
                assert_eq!(channel, 0);
                assert_eq!(unit_count, 2);
            }
            other => panic!("expected transmit, got {other:?}"),
        }
        sender.on_tx_complete(until + 2.0);
        assert_eq!(sender.state.phase, MacPhase::Idle);
        assert_eq!(sender.state.collision_count, 0);
        let due = sender.next_frame_due();
        assert!(due >= until + 52.0 && due <= until + 72.0);
    }
}
