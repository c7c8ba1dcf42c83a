//! Frame detection and chunk decoding.
//!
//! Reception is a two-stage scan: cheap Goertzel filters at the channel's
//! two head frequencies hop through the stream until a head chunk crosses
//! the adaptive threshold, a fine pass aligns the chunk grid to the head
//! plateau, and each chunk is then decided from a 2048-sample analysis
//! window centered in it. Per group, the decoded symbol is the strongest
//! candidate tone, accepted only when it clears `detect_factor` times the
//! guard-band noise floor; otherwise the group erases to a flagged zero.

use crate::audio::AudioBuffer;
use crate::codec::{Chunk, Symbol};

use super::goertzel;
use super::tones::ToneGroup;
use super::ModemParams;

/// Floor guard for threshold comparisons in digitally silent windows.
const MIN_FLOOR: f64 = 1e-6;

/// A head hit must also carry at least this fraction of the strongest
/// candidate tone in each group, so that spectral leakage from loud
/// non-head tones cannot masquerade as a head in quiet conditions.
const HEAD_DOMINANCE: f64 = 0.5;

/// Recompute the guard-band floor every this many scan hops.
const FLOOR_REFRESH_HOPS: usize = 4;

/// One demodulated frame: its chunk sequence including the delimiters that
/// were actually heard.
#[derive(Debug, Clone, PartialEq)]
pub struct DemodulatedFrame {
    /// Sample offset of the head chunk's start.
    pub start: usize,
    pub chunks: Vec<Chunk>,
    /// Symbol slots that fell below the detection threshold.
    pub erasures: usize,
    /// True when the frame hit the chunk cap or the buffer end before a
    /// confident tail.
    pub truncated: bool,
}

/// Scan for a head chunk from `from_sample` onward.
///
/// Returns the start of the first window in which both head-frequency
/// energies exceed `detect_factor` times the local guard floor.
pub fn detect_head(
    buffer: &AudioBuffer,
    channel: usize,
    from_sample: usize,
    params: &ModemParams,
) -> Option<usize> {
    let fft = params.fft_size;
    if buffer.len() < fft || from_sample + fft > buffer.len() {
        return None;
    }
    let head_low = params
        .plan
        .symbol_frequency(channel, ToneGroup::Low, Symbol::Head);
    let head_high = params
        .plan
        .symbol_frequency(channel, ToneGroup::High, Symbol::Head);
    let guards = params.plan.guard_frequencies(channel);

    let mut floor = 0.0;
    let mut s = from_sample;
    let mut hop_count = 0usize;
    while s + fft <= buffer.len() {
        let window = &buffer.samples[s..s + fft];
        if hop_count % FLOOR_REFRESH_HOPS == 0 {
            floor = goertzel::median(&goertzel::magnitudes(window, &guards));
        }
        let m_low = goertzel::magnitude(window, head_low);
        let m_high = goertzel::magnitude(window, head_high);
        if m_low.min(m_high) > params.detect_factor * floor.max(MIN_FLOOR)
            && heads_dominate(window, m_low, m_high, channel, params)
        {
            return Some(s);
        }
        s += params.head_hop;
        hop_count += 1;
    }
    None
}

/// Confirm a threshold crossing by checking that the head tones are among
/// the strongest candidates of their groups, not a leakage skirt of some
/// other loud tone. Runs only on candidate hits, keeping the scan cheap.
fn heads_dominate(
    window: &[f32],
    m_low: f64,
    m_high: f64,
    channel: usize,
    params: &ModemParams,
) -> bool {
    for (group, head_mag) in [(ToneGroup::Low, m_low), (ToneGroup::High, m_high)] {
        let freqs = params.plan.candidate_frequencies(channel, group);
        let max = goertzel::magnitudes(window, &freqs)
            .into_iter()
            .fold(0.0f64, f64::max);
        if head_mag < HEAD_DOMINANCE * max {
            return false;
        }
    }
    true
}

/// Demodulate every frame found on `channel`.
pub fn demodulate(buffer: &AudioBuffer, channel: usize, params: &ModemParams) -> Vec<DemodulatedFrame> {
    let mut frames = Vec::new();
    let mut cursor = 0usize;
    while let Some(rough) = detect_head(buffer, channel, cursor, params) {
        let start = refine_head_start(buffer, rough, channel, params);
        match read_frame(buffer, start, channel, params) {
            Some(frame) => {
                cursor = frame.start + frame.chunks.len() * params.chunk_duration;
                frames.push(frame);
            }
            None => {
                // False lock on noise; resume a little past the hit.
                cursor = rough + 4 * params.head_hop;
            }
        }
        if cursor >= buffer.len() {
            break;
        }
    }
    frames
}

/// Decode chunks from an aligned head start until a confident tail, the
/// chunk cap, or the end of the buffer. `None` when the first chunk does
/// not look like a head (a false lock).
fn read_frame(
    buffer: &AudioBuffer,
    start: usize,
    channel: usize,
    params: &ModemParams,
) -> Option<DemodulatedFrame> {
    let chunk_len = params.chunk_duration;
    let center_off = (chunk_len - params.fft_size) / 2;
    let mut chunks = Vec::new();
    let mut erasures = 0usize;
    let mut truncated = false;
    for k in 0..params.max_frame_chunks {
        let w0 = start + k * chunk_len + center_off;
        if w0 + params.fft_size > buffer.len() {
            truncated = true;
            break;
        }
        let window = &buffer.samples[w0..w0 + params.fft_size];
        let (chunk, erased) = decode_chunk(window, channel, params);
        erasures += erased.iter().filter(|&&e| e).count();
        if k == 0 {
            // Require at least one confidently decoded head symbol; the
            // other may be erased under noise.
            let head_ok = (chunk.low == Symbol::Head && !erased[0])
                || (chunk.high == Symbol::Head && !erased[1]);
            let other_ok = [
                (chunk.low, erased[0]),
                (chunk.high, erased[1]),
            ]
            .iter()
            .all(|&(sym, er)| sym == Symbol::Head || er);
            if !(head_ok && other_ok) {
                return None;
            }
            chunks.push(Chunk::HEAD);
            continue;
        }
        chunks.push(chunk);
        if chunk == Chunk::TAIL && erased == [false, false] {
            return Some(DemodulatedFrame {
                start,
                chunks,
                erasures,
                truncated: false,
            });
        }
        if k + 1 == params.max_frame_chunks {
            truncated = true;
        }
    }
    Some(DemodulatedFrame {
        start,
        chunks,
        erasures,
        truncated,
    })
}

/// Fine alignment: the head-tone response of a sliding analysis window
/// plateaus while the window sits fully inside the head chunk; the chunk
/// start is the plateau center minus the centering offset.
fn refine_head_start(
    buffer: &AudioBuffer,
    rough: usize,
    channel: usize,
    params: &ModemParams,
) -> usize {
    const FINE_HOP: usize = 64;
    let fft = params.fft_size;
    let head_low = params
        .plan
        .symbol_frequency(channel, ToneGroup::Low, Symbol::Head);
    let head_high = params
        .plan
        .symbol_frequency(channel, ToneGroup::High, Symbol::Head);
    let lo = rough.saturating_sub(params.chunk_duration);
    let hi = (rough + params.chunk_duration).min(buffer.len().saturating_sub(fft));
    if hi <= lo {
        return rough;
    }
    let offsets: Vec<usize> = (lo..=hi).step_by(FINE_HOP).collect();
    let response: Vec<f64> = offsets
        .iter()
        .map(|&s| {
            let window = &buffer.samples[s..s + fft];
            goertzel::magnitude(window, head_low).min(goertzel::magnitude(window, head_high))
        })
        .collect();
    let (best, &best_mag) = response
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .unwrap();
    if best_mag <= 0.0 {
        return rough;
    }
    let threshold = 0.85 * best_mag;
    let mut left = best;
    while left > 0 && response[left - 1] >= threshold {
        left -= 1;
    }
    let mut right = best;
    while right + 1 < response.len() && response[right + 1] >= threshold {
        right += 1;
    }
    let center = (offsets[left] + offsets[right]) / 2;
    let centering = (params.chunk_duration - fft) / 2;
    center.saturating_sub(centering)
}

/// Per-group argmax decision with the adaptive guard-floor threshold.
/// Returns the chunk and per-group erasure flags (erased groups read as
/// `Data(0)`).
fn decode_chunk(window: &[f32], channel: usize, params: &ModemParams) -> (Chunk, [bool; 2]) {
    let guards = params.plan.guard_frequencies(channel);
    let floor = goertzel::median(&goertzel::magnitudes(window, &guards));
    let threshold = params.detect_factor * floor.max(MIN_FLOOR);
    let mut symbols = [Symbol::Data(0); 2];
    let mut erased = [false; 2];
    for (slot, group) in [ToneGroup::Low, ToneGroup::High].into_iter().enumerate() {
        let freqs = params.plan.candidate_frequencies(channel, group);
        let mags = goertzel::magnitudes(window, &freqs);
        let (best_idx, &best_mag) = mags
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap();
        if best_mag > threshold {
            symbols[slot] = Symbol::from_group_index(best_idx).unwrap();
        } else {
            erased[slot] = true;
        }
    }
    (
        Chunk {
            low: symbols[0],
            high: symbols[1],
        },
        erased,
    )
}
