//! Simulated acoustic scenes.
//!
//! Propagation is a free-field inverse-distance pressure law from a 0.3 m
//! reference, with fixed dB losses for fabric occlusion and each wall
//! crossing, and a sample delay at 343 m/s. Noise comes from an ambient
//! Gaussian floor plus positioned sources (white or band-limited). All
//! randomness is keyed by `(seed, receiver, absolute sample block)` or
//! `(seed, source)`, so any window of the same scene renders the same
//! noise process regardless of how the timeline is partitioned.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::audio::{AudioBuffer, SAMPLE_RATE};

/// Reference distance of the 1/d pressure law, meters.
pub const REFERENCE_DISTANCE_M: f64 = 0.3;

/// Speed of sound, m/s.
pub const SPEED_OF_SOUND_M_S: f64 = 343.0;

/// Noise is generated in blocks of this many samples, aligned to the
/// absolute timeline.
const NOISE_BLOCK: usize = 2048;

/// Sinusoids per band-limited noise source.
const BAND_NOISE_TONES: usize = 32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeConfig {
    pub id: u32,
    /// Meters.
    pub position: (f64, f64),
    /// Linear speaker volume in [0, 1].
    pub volume: f64,
    /// Fabric/pocket attenuation applied to this node's emissions and
    /// receptions, dB.
    #[serde(default)]
    pub occlusion_db: f64,
    /// Extra per-receiver Gaussian noise, linear amplitude.
    #[serde(default)]
    pub rx_noise_floor: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Wall {
    /// Segment endpoints in meters.
    pub segment: ((f64, f64), (f64, f64)),
    /// Loss per crossing, dB.
    pub loss_db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    White,
    BandLimited { low_hz: f64, high_hz: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSource {
    pub position: (f64, f64),
    pub kind: NoiseKind,
    /// RMS amplitude at the reference distance.
    pub level: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct Scene {
    pub nodes: Vec<NodeConfig>,
    #[serde(default)]
    pub walls: Vec<Wall>,
    #[serde(default)]
    pub noise_sources: Vec<NoiseSource>,
    #[serde(default)]
    pub ambient_sigma: f64,
}

impl Scene {
    pub fn node(&self, id: u32) -> &NodeConfig {
        self.nodes
            .iter()
            .find(|n| n.id == id)
            .unwrap_or_else(|| panic!("no node {id} in scene"))
    }

    /// Check id uniqueness and finiteness of all geometry.
    pub fn validate(&self) -> Result<(), String> {
        let mut seen = std::collections::HashSet::new();
        for n in &self.nodes {
            if !seen.insert(n.id) {
                return Err(format!("duplicate node id {}", n.id));
            }
            if !n.position.0.is_finite() || !n.position.1.is_finite() {
                return Err(format!("node {} has non-finite position", n.id));
            }
            if !(0.0..=1.0).contains(&n.volume) {
                return Err(format!("node {} volume outside [0, 1]", n.id));
            }
            if n.occlusion_db < 0.0 {
                return Err(format!("node {} negative occlusion", n.id));
            }
        }
        Ok(())
    }
}

pub fn distance(a: (f64, f64), b: (f64, f64)) -> f64 {
    ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt()
}

/// Samples of flight time over `d` meters.
pub fn propagation_delay_samples(d: f64) -> i64 {
    (SAMPLE_RATE as f64 * d / SPEED_OF_SOUND_M_S).round() as i64
}

/// Linear amplitude gain from `tx` to `rx`:
/// `(d0 / max(d, d0)) · 10^(−(occlusions + wall losses)/20)`.
///
/// Coincident positions are treated as the reference distance.
pub fn path_gain(tx: &NodeConfig, rx: &NodeConfig, walls: &[Wall]) -> f64 {
    gain_between(tx.position, tx.occlusion_db, rx, walls)
}

fn gain_between(
    tx_pos: (f64, f64),
    tx_occlusion_db: f64,
    rx: &NodeConfig,
    walls: &[Wall],
) -> f64 {
    let d = distance(tx_pos, rx.position);
    let spread = REFERENCE_DISTANCE_M / d.max(REFERENCE_DISTANCE_M);
    let mut loss_db = tx_occlusion_db + rx.occlusion_db;
    for wall in walls {
        if segments_cross(tx_pos, rx.position, wall.segment.0, wall.segment.1) {
            loss_db += wall.loss_db;
        }
    }
    spread * 10f64.powf(-loss_db / 20.0)
}

/// Proper segment intersection test via orientation signs. Touching at an
/// endpoint counts as a crossing; collinear overlap does not.
fn segments_cross(a: (f64, f64), b: (f64, f64), c: (f64, f64), d: (f64, f64)) -> bool {
    fn orient(p: (f64, f64), q: (f64, f64), r: (f64, f64)) -> f64 {
        (q.0 - p.0) * (r.1 - p.1) - (q.1 - p.1) * (r.0 - p.0)
    }
    let o1 = orient(a, b, c);
    let o2 = orient(a, b, d);
    let o3 = orient(c, d, a);
    let o4 = orient(c, d, b);
    o1 * o2 <= 0.0 && o3 * o4 <= 0.0 && (o1 != o2 || o3 != o4)
}

/// One scheduled emission: who, when (absolute sample), and the waveform.
#[derive(Debug, Clone)]
pub struct Transmission<'a> {
    pub tx_id: u32,
    pub start_sample: i64,
    pub samples: &'a [f32],
}

/// Render what `rx_id` hears over `[0, duration_samples)`.
pub fn render_at_receiver(
    scene: &Scene,
    rx_id: u32,
    transmissions: &[Transmission<'_>],
    duration_samples: usize,
    rng_seed: u64,
) -> AudioBuffer {
    render_window(scene, rx_id, transmissions, 0, duration_samples, rng_seed)
}

/// Render what `rx_id` hears over `[window_start, window_start + len)` of
/// the absolute timeline. Noise is consistent across overlapping windows
/// of the same scene and seed.
pub fn render_window(
    scene: &Scene,
    rx_id: u32,
    transmissions: &[Transmission<'_>],
    window_start: i64,
    len: usize,
    rng_seed: u64,
) -> AudioBuffer {
    let rx = scene.node(rx_id);
    let mut out = AudioBuffer::silence(len);

    for tx in transmissions {
        let tx_node = scene.node(tx.tx_id);
        let gain = path_gain(tx_node, rx, &scene.walls);
        let delay = propagation_delay_samples(distance(tx_node.position, rx.position));
        let arrival = tx.start_sample + delay;
        out.mix_at(arrival - window_start, tx.samples, gain as f32);
    }

    let ambient = (scene.ambient_sigma.powi(2) + rx.rx_noise_floor.powi(2)).sqrt();
    if ambient > 0.0 {
        add_gaussian_noise(&mut out, window_start, ambient, mix_key(rng_seed, 1, rx_id as u64));
    }

    for (j, source) in scene.noise_sources.iter().enumerate() {
        let gain = gain_between(source.position, 0.0, rx, &scene.walls);
        if gain * source.level == 0.0 {
            continue;
        }
        match source.kind {
            NoiseKind::White => {
                let key = mix_key(rng_seed, 2, ((j as u64) << 32) | rx_id as u64);
                add_gaussian_noise(&mut out, window_start, source.level * gain, key);
            }
            NoiseKind::BandLimited { low_hz, high_hz } => {
                let key = mix_key(rng_seed, 3, j as u64);
                add_band_noise(
                    &mut out,
                    window_start,
                    low_hz,
                    high_hz,
                    source.level * gain,
                    key,
                );
            }
        }
    }
    out
}

/// Gaussian noise generated in absolute-time blocks so different windows
/// see the same process.
fn add_gaussian_noise(out: &mut AudioBuffer, window_start: i64, sigma: f64, key: u64) {
    let end = window_start + out.len() as i64;
    let first_block = window_start.div_euclid(NOISE_BLOCK as i64);
    let last_block = (end - 1).div_euclid(NOISE_BLOCK as i64);
    let mut block_buf = vec![0.0f32; NOISE_BLOCK];
    for block in first_block..=last_block {
        let mut rng = ChaCha8Rng::seed_from_u64(mix_key(key, 0x9E37, block as u64));
        for pair in block_buf.chunks_mut(2) {
            // Box-Muller
            let u1: f64 = rng.gen_range(1e-12..1.0);
            let u2: f64 = rng.gen();
            let r = (-2.0 * u1.ln()).sqrt();
            let theta = 2.0 * std::f64::consts::PI * u2;
            pair[0] = (sigma * r * theta.cos()) as f32;
            if pair.len() > 1 {
                pair[1] = (sigma * r * theta.sin()) as f32;
            }
        }
        let block_start = block * NOISE_BLOCK as i64;
        out.mix_at(block_start - window_start, &block_buf, 1.0);
    }
}

/// Band-limited noise as a fixed bank of random sinusoids drawn once per
/// source; exactly zero outside its band and Gaussian-ish inside by the
/// central limit theorem.
fn add_band_noise(
    out: &mut AudioBuffer,
    window_start: i64,
    low_hz: f64,
    high_hz: f64,
    rms: f64,
    key: u64,
) {
    let mut rng = ChaCha8Rng::seed_from_u64(key);
    let amp = rms * (2.0 / BAND_NOISE_TONES as f64).sqrt();
    let mut wave = vec![0.0f64; out.len()];
    for _ in 0..BAND_NOISE_TONES {
        let freq = rng.gen_range(low_hz..high_hz);
        let phase0: f64 = rng.gen_range(0.0..2.0 * std::f64::consts::PI);
        let w = 2.0 * std::f64::consts::PI * freq / SAMPLE_RATE as f64;
        // Phasor recurrence from the window's absolute start phase,
        // renormalized periodically against drift.
        let start_phase = phase0 + w * window_start as f64;
        let (mut sin_p, mut cos_p) = start_phase.sin_cos();
        let (sin_w, cos_w) = w.sin_cos();
        for (i, slot) in wave.iter_mut().enumerate() {
            *slot += amp * sin_p;
            let s = sin_p * cos_w + cos_p * sin_w;
            let c = cos_p * cos_w - sin_p * sin_w;
            sin_p = s;
            cos_p = c;
            if i % 4096 == 4095 {
                let exact = phase0 + w * (window_start + i as i64 + 1) as f64;
                let (es, ec) = exact.sin_cos();
                sin_p = es;
                cos_p = ec;
            }
        }
    }
    let wave32: Vec<f32> = wave.iter().map(|&v| v as f32).collect();
    out.mix_at(0, &wave32, 1.0);
}

fn mix_key(a: u64, b: u64, c: u64) -> u64 {
    // splitmix64 over a simple combination
    let mut z = a
        .wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(b.wrapping_mul(0xBF58_476D_1CE4_E5B9))
        .wrapping_add(c.wrapping_mul(0x94D0_49BB_1331_11EB));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
