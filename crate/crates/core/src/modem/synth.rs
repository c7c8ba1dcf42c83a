//! Chunk-sequence to waveform synthesis.
//!
//! Each chunk occupies `chunk_duration` samples holding the sum of its two
//! mapped tones, faded in and out with a raised-cosine ramp to keep the
//! emission click-free. Two backends produce the tones: direct sinusoid
//! evaluation, and a 2^15-point inverse FFT of the tones' exact spectrum.
//! Both must agree to well under 1e-6 RMS.

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::audio::{AudioBuffer, SAMPLE_RATE};
use crate::codec::Chunk;

use super::tones::ToneGroup;
use super::ModemParams;

/// Peak amplitude per tone; two tones then never exceed 0.9 full scale.
pub const TONE_AMPLITUDE: f64 = 0.45;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SynthBackend {
    /// Evaluate the two sinusoids sample by sample.
    Direct,
    /// Build the tones' frequency-domain representation on a 2^15-point
    /// grid and inverse-FFT it, truncating to the chunk duration.
    Ifft,
}

/// Synthesize the waveform of a chunk sequence on `channel` with the
/// direct backend.
pub fn synthesize_frame(
    chunks: &[Chunk],
    channel: usize,
    volume: f64,
    params: &ModemParams,
) -> AudioBuffer {
    synthesize_frame_with(chunks, channel, volume, params, SynthBackend::Direct)
}

/// Synthesize with an explicit backend.
pub fn synthesize_frame_with(
    chunks: &[Chunk],
    channel: usize,
    volume: f64,
    params: &ModemParams,
    backend: SynthBackend,
) -> AudioBuffer {
    debug_assert!((0.0..=1.0).contains(&volume));
    let n = params.chunk_duration;
    let mut samples = vec![0.0f32; chunks.len() * n];
    let amp = TONE_AMPLITUDE * volume;
    if amp == 0.0 {
        return AudioBuffer::from_samples(samples);
    }
    let mut ifft = IfftSynth::new(params.ifft_size);
    for (k, chunk) in chunks.iter().enumerate() {
        let f_low = params.plan.symbol_frequency(channel, ToneGroup::Low, chunk.low);
        let f_high = params.plan.symbol_frequency(channel, ToneGroup::High, chunk.high);
        let wave = match backend {
            SynthBackend::Direct => direct_tone_pair(f_low, f_high, n, amp),
            SynthBackend::Ifft => ifft.tone_pair(f_low, f_high, n, amp),
        };
        let dst = &mut samples[k * n..(k + 1) * n];
        for (i, (d, w)) in dst.iter_mut().zip(&wave).enumerate() {
            *d = (*w * ramp_gain(i, n, params.ramp)) as f32;
        }
    }
    AudioBuffer::from_samples(samples)
}

/// Raised-cosine fade over the first and last `ramp` samples of a chunk.
fn ramp_gain(i: usize, len: usize, ramp: usize) -> f64 {
    let ramp = ramp.min(len / 2);
    if ramp == 0 {
        return 1.0;
    }
    let x = if i < ramp {
        i as f64 / ramp as f64
    } else if i >= len - ramp {
        (len - 1 - i) as f64 / ramp as f64
    } else {
        return 1.0;
    };
    0.5 * (1.0 - (std::f64::consts::PI * x).cos())
}

fn direct_tone_pair(f_low: f64, f_high: f64, n: usize, amp: f64) -> Vec<f64> {
    let w1 = 2.0 * std::f64::consts::PI * f_low / SAMPLE_RATE as f64;
    let w2 = 2.0 * std::f64::consts::PI * f_high / SAMPLE_RATE as f64;
    (0..n)
        .map(|t| amp * ((w1 * t as f64).sin() + (w2 * t as f64).sin()))
        .collect()
}

/// IFFT synthesis backend.
///
/// The plan's frequencies do not land on integer bins of the 2^15 grid, so
/// "two active bins" is realized exactly as each tone's analytic DFT (a
/// Dirichlet kernel pair around ±its fractional bin). The inverse FFT of
/// that spectrum reproduces the sinusoid to machine precision, which the
/// backend-agreement test relies on.
struct IfftSynth {
    size: usize,
    spectrum: Vec<Complex64>,
    scratch: Vec<Complex64>,
    fft: std::sync::Arc<dyn rustfft::Fft<f64>>,
}

impl IfftSynth {
    fn new(size: usize) -> Self {
        let fft = FftPlanner::new().plan_fft_inverse(size);
        IfftSynth {
            size,
            spectrum: vec![Complex64::new(0.0, 0.0); size],
            scratch: Vec::new(),
            fft,
        }
    }

    fn tone_pair(&mut self, f_low: f64, f_high: f64, n: usize, amp: f64) -> Vec<f64> {
        debug_assert!(n <= self.size);
        self.spectrum.fill(Complex64::new(0.0, 0.0));
        self.add_tone_spectrum(f_low, amp);
        self.add_tone_spectrum(f_high, amp);
        self.scratch = self.spectrum.clone();
        self.fft.process(&mut self.scratch);
        let scale = 1.0 / self.size as f64;
        self.scratch[..n].iter().map(|c| c.re * scale).collect()
    }

    /// Add the exact length-N DFT of `amp · sin(2π f t / fs)`:
    /// X[k] = amp/(2i) · (D(k − ν) − D(k + ν)) with ν the fractional bin.
    fn add_tone_spectrum(&mut self, freq: f64, amp: f64) {
        let n = self.size as f64;
        let nu = freq * n / SAMPLE_RATE as f64;
        let half_amp_over_2i = Complex64::new(0.0, -amp / 2.0);
        for (k, slot) in self.spectrum.iter_mut().enumerate() {
            let k = k as f64;
            let d = dirichlet(k - nu, n) - dirichlet(k + nu, n);
            *slot += half_amp_over_2i * d;
        }
    }
}

/// D(x) = Σ_{t=0..N-1} e^{-2πi x t / N}, the geometric-series kernel.
fn dirichlet(x: f64, n: f64) -> Complex64 {
    let frac = x / n;
    let denom_angle = std::f64::consts::PI * frac;
    if denom_angle.sin().abs() < 1e-15 {
        // x is (numerically) a multiple of N: the sum collapses to N.
        return Complex64::new(n, 0.0);
    }
    let num = 1.0 - (Complex64::new(0.0, -2.0 * std::f64::consts::PI * x)).exp();
    let den = 1.0 - (Complex64::new(0.0, -2.0 * std::f64::consts::PI * frac)).exp();
    num / den
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::Symbol;
    use crate::modem::goertzel;

    #[test]
    fn empty_chunks_empty_buffer() {
        let params = ModemParams::default();
        let buf = synthesize_frame(&[], 0, 1.0, &params);
        assert!(buf.is_empty());
    }

    #[test]
    fn zero_volume_is_silence() {
        let params = ModemParams::default();
        let buf = synthesize_frame(&[Chunk::data(3, 7)], 0, 0.0, &params);
        assert_eq!(buf.len(), params.chunk_duration);
        assert!(buf.samples.iter().all(|&s| s == 0.0));
    }

    #[test]
    fn peaks_at_mapped_frequencies() {
        let params = ModemParams::default();
        let buf = synthesize_frame(&[Chunk::data(0, 0)], 0, 1.0, &params);
        // Analyze the ramp-free center of the chunk.
        let window = &buf.samples[1024..1024 + 2048];
        let at_low = goertzel::magnitude(window, 17_500.0);
        let at_high = goertzel::magnitude(window, 17_500.0 + 21.0 * 46.875);
        assert!((at_low - TONE_AMPLITUDE).abs() < 0.01, "low {at_low}");
        assert!((at_high - TONE_AMPLITUDE).abs() < 0.01, "high {at_high}");
        // Another candidate of the same group stays near zero.
        let off = goertzel::magnitude(window, 17_500.0 + 46.875);
        assert!(off < 0.01 * TONE_AMPLITUDE, "off-tone leakage {off}");
    }

    #[test]
    fn amplitude_never_clips() {
        let params = ModemParams::default();
        let chunks = vec![Chunk::data(15, 15), Chunk::HEAD, Chunk::TAIL];
        let buf = synthesize_frame(&chunks, 1, 1.0, &params);
        assert!(buf.samples.iter().all(|&s| s.abs() <= 0.95));
    }

    #[test]
    fn backends_agree_within_1e6_rms() {
        let params = ModemParams::default();
        let chunks = vec![Chunk::HEAD, Chunk::data(4, 11), Chunk::data(0, 15), Chunk::TAIL];
        for channel in 0..2 {
            let direct = synthesize_frame_with(&chunks, channel, 0.8, &params, SynthBackend::Direct);
            let ifft = synthesize_frame_with(&chunks, channel, 0.8, &params, SynthBackend::Ifft);
            assert_eq!(direct.len(), ifft.len());
            let mse: f64 = direct
                .samples
                .iter()
                .zip(&ifft.samples)
                .map(|(a, b)| ((a - b) as f64).powi(2))
                .sum::<f64>()
                / direct.len() as f64;
            let rms = mse.sqrt();
            assert!(rms < 1e-6, "backend disagreement: RMS {rms}");
        }
    }

    #[test]
    fn ramp_endpoints_are_quiet() {
        let params = ModemParams::default();
        let buf = synthesize_frame(&[Chunk { low: Symbol::Head, high: Symbol::Head }], 0, 1.0, &params);
        assert!(buf.samples[0].abs() < 1e-6);
        assert!(buf.samples[buf.len() - 1].abs() < 0.02);
        // Mid-chunk runs at full level.
        let mid_peak = buf.samples[1024..3072].iter().fold(0.0f32, |m, &s| m.max(s.abs()));
        assert!(mid_peak > 0.8 * TONE_AMPLITUDE as f32);
    }
}
