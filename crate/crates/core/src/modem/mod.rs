//! Ultrasonic multi-tone modem.
//!
//! Synthesis maps each chunk's two symbols to two tones out of the
//! [`TonePlan`] and emits them for `chunk_duration` samples; reception
//! scans for head chunks, aligns the chunk grid, and decides each symbol
//! by strongest-candidate detection against the guard-band noise floor.
//! [`band_energy`] supports the MAC's carrier sensing.

mod demod;
mod goertzel;
mod synth;
mod tones;

pub use demod::{demodulate, detect_head, DemodulatedFrame};
pub use goertzel::{magnitude as tone_magnitude, magnitudes as tone_magnitudes, median};
pub use synth::{synthesize_frame, synthesize_frame_with, SynthBackend, TONE_AMPLITUDE};
pub use tones::{ToneGroup, TonePlan};

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::audio::{AudioBuffer, SAMPLE_RATE};

/// Tunable modem constants. The defaults match the deployed waveform;
/// `detect_factor` is the one knob scenario presets recalibrate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModemParams {
    /// Samples per chunk (85.3 ms at 48 kHz).
    pub chunk_duration: usize,
    /// Analysis window for symbol decisions and energy measurement.
    pub fft_size: usize,
    /// Grid size of the IFFT synthesis backend.
    pub ifft_size: usize,
    /// Raised-cosine fade length at both ends of every chunk.
    pub ramp: usize,
    /// Detection threshold as a multiple of the guard-band floor.
    pub detect_factor: f64,
    /// Head-scan stride in samples.
    pub head_hop: usize,
    /// Chunk cap per frame when no tail is heard.
    pub max_frame_chunks: usize,
    pub plan: TonePlan,
}

impl Default for ModemParams {
    fn default() -> Self {
        ModemParams {
            chunk_duration: 4096,
            fft_size: 2048,
            ifft_size: 1 << 15,
            ramp: 256,
            detect_factor: 4.0,
            head_hop: 256,
            max_frame_chunks: 122,
            plan: TonePlan::default(),
        }
    }
}

impl ModemParams {
    /// Panics when structural invariants are violated.
    pub fn validate(&self) {
        assert!(self.chunk_duration >= 2 * self.fft_size);
        assert!(self.detect_factor > 1.0);
        assert!(self.ifft_size >= self.chunk_duration);
        assert!(self.head_hop > 0);
    }
}

/// Energy in a channel's 54-tone band over one `fft_size` window starting
/// at `start`: sum of squared FFT magnitudes of the in-band bins,
/// normalized by the window length.
pub fn band_energy(buffer: &AudioBuffer, channel: usize, start: usize, params: &ModemParams) -> f64 {
    let n = params.fft_size;
    assert!(start + n <= buffer.len(), "window exceeds buffer");
    let mut spectrum: Vec<Complex64> = buffer.samples[start..start + n]
        .iter()
        .map(|&s| Complex64::new(s as f64, 0.0))
        .collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut spectrum);
    let (f_lo, f_hi) = params.plan.band(channel);
    let bin_hz = SAMPLE_RATE as f64 / n as f64;
    let k_lo = (f_lo / bin_hz).ceil() as usize;
    let k_hi = ((f_hi / bin_hz).floor() as usize).min(n / 2);
    spectrum[k_lo..=k_hi]
        .iter()
        .map(|c| c.norm_sqr())
        .sum::<f64>()
        / n as f64
}

/// Median guard-band tone magnitude over one window; the MAC's noise
/// measure, on the same scale as symbol magnitudes.
pub fn guard_floor(buffer: &AudioBuffer, channel: usize, start: usize, params: &ModemParams) -> f64 {
    let n = params.fft_size;
    assert!(start + n <= buffer.len(), "window exceeds buffer");
    let window = &buffer.samples[start..start + n];
    let guards = params.plan.guard_frequencies(channel);
    median(&tone_magnitudes(window, &guards))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::{frame_to_chunks, DataFrame};

    #[test]
    fn band_energy_of_silence_is_zero() {
        let params = ModemParams::default();
        let buf = AudioBuffer::silence(2048);
        assert!(band_energy(&buf, 0, 0, &params) < 1e-12);
        assert!(band_energy(&buf, 1, 0, &params) < 1e-12);
    }

    #[test]
    fn band_energy_separates_channels() {
        let params = ModemParams::default();
        let frame = DataFrame::new(&[0x3Cu8; 16], 1).unwrap();
        let buf = synthesize_frame(&frame_to_chunks(&frame), 0, 1.0, &params);
        let e0 = band_energy(&buf, 0, 4096, &params);
        let e1 = band_energy(&buf, 1, 4096, &params);
        assert!(e0 > 10.0 * e1, "ch0 {e0} vs ch1 {e1}");
    }

    #[test]
    fn band_energy_scales_with_volume_squared() {
        let params = ModemParams::default();
        let frame = DataFrame::new(&[0xA5u8; 16], 1).unwrap();
        let chunks = frame_to_chunks(&frame);
        let full = synthesize_frame(&chunks, 0, 1.0, &params);
        let half = synthesize_frame(&chunks, 0, 0.5, &params);
        let e_full = band_energy(&full, 0, 4096, &params);
        let e_half = band_energy(&half, 0, 4096, &params);
        let ratio = e_half / e_full;
        assert!((ratio - 0.25).abs() < 0.25 * 0.05, "ratio {ratio}");
    }
}
