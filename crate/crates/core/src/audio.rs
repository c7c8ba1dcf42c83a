//! Mono 48 kHz sample buffers and WAV file I/O.

use std::path::Path;

use thiserror::Error;

/// Fixed system sample rate in Hz.
pub const SAMPLE_RATE: u32 = 48_000;

#[derive(Debug, Error)]
pub enum WavError {
    #[error("wav: {0}")]
    Format(#[from] hound::Error),
    #[error("expected mono {SAMPLE_RATE} Hz 16-bit PCM, got {channels} ch {sample_rate} Hz {bits} bit")]
    UnsupportedFormat {
        channels: u16,
        sample_rate: u32,
        bits: u16,
    },
}

/// Mono amplitude stream in [-1, 1] at [`SAMPLE_RATE`].
///
/// Mixing saturates instead of overflowing; `clipped` counts how many
/// samples hit the rails.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AudioBuffer {
    pub samples: Vec<f32>,
    pub clipped: u64,
}

impl AudioBuffer {
    pub fn silence(len: usize) -> Self {
        AudioBuffer {
            samples: vec![0.0; len],
            clipped: 0,
        }
    }

    pub fn from_samples(samples: Vec<f32>) -> Self {
        AudioBuffer { samples, clipped: 0 }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_seconds(&self) -> f64 {
        self.samples.len() as f64 / SAMPLE_RATE as f64
    }

    /// Add `gain * source` into the buffer starting at `offset`, clamping
    /// to [-1, 1]. The portion falling outside the buffer is dropped.
    pub fn mix_at(&mut self, offset: i64, source: &[f32], gain: f32) {
        for (i, &s) in source.iter().enumerate() {
            let t = offset + i as i64;
            if t < 0 {
                continue;
            }
            let t = t as usize;
            if t >= self.samples.len() {
                break;
            }
            let mixed = self.samples[t] + gain * s;
            if mixed > 1.0 {
                self.samples[t] = 1.0;
                self.clipped += 1;
            } else if mixed < -1.0 {
                self.samples[t] = -1.0;
                self.clipped += 1;
            } else {
                self.samples[t] = mixed;
            }
        }
    }

    /// Write as mono 48 kHz 16-bit signed PCM (little-endian RIFF).
    pub fn write_wav<P: AsRef<Path>>(&self, path: P) -> Result<(), WavError> {
        let spec = hound::WavSpec {
            channels: 1,
            sample_rate: SAMPLE_RATE,
            bits_per_sample: 16,
            sample_format: hound::SampleFormat::Int,
        };
        let mut writer = hound::WavWriter::create(path, spec)?;
        for &s in &self.samples {
            let q = (s.clamp(-1.0, 1.0) * i16::MAX as f32).round() as i16;
            writer.write_sample(q)?;
        }
        writer.finalize()?;
        Ok(())
    }

    /// Read a WAV produced by [`AudioBuffer::write_wav`]; rejects other
    /// formats.
    pub fn read_wav<P: AsRef<Path>>(path: P) -> Result<Self, WavError> {
        let mut reader = hound::WavReader::open(path)?;
        let spec = reader.spec();
        if spec.channels != 1
            || spec.sample_rate != SAMPLE_RATE
            || spec.bits_per_sample != 16
            || spec.sample_format != hound::SampleFormat::Int
        {
            return Err(WavError::UnsupportedFormat {
                channels: spec.channels,
                sample_rate: spec.sample_rate,
                bits: spec.bits_per_sample,
            });
        }
        let samples: Result<Vec<f32>, _> = reader
            .samples::<i16>()
            .map(|s| s.map(|v| v as f32 / i16::MAX as f32))
            .collect();
        Ok(AudioBuffer::from_samples(samples?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mix_saturates_and_counts() {
        let mut buf = AudioBuffer::silence(4);
        buf.mix_at(0, &[0.8, -0.8, 0.5, 0.0], 1.0);
        buf.mix_at(0, &[0.8, -0.8, 0.1, 0.0], 1.0);
        assert_eq!(buf.samples[0], 1.0);
        assert_eq!(buf.samples[1], -1.0);
        assert!((buf.samples[2] - 0.6).abs() < 1e-6);
        assert_eq!(buf.clipped, 2);
    }

    #[test]
    fn mix_clips_ranges_outside_buffer() {
        let mut buf = AudioBuffer::silence(3);
        buf.mix_at(-1, &[1.0, 0.25, 0.25, 0.25, 0.25], 0.5);
        assert_eq!(buf.samples, vec![0.125, 0.125, 0.125]);
    }

    #[test]
    fn wav_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.wav");
        let buf = AudioBuffer::from_samples(
            (0..4800)
                .map(|i| (i as f32 / 123.0).sin() * 0.7)
                .collect(),
        );
        buf.write_wav(&path).unwrap();
        let back = AudioBuffer::read_wav(&path).unwrap();
        assert_eq!(back.len(), buf.len());
        for (a, b) in buf.samples.iter().zip(&back.samples) {
            assert!((a - b).abs() < 1.0 / 32000.0);
        }
    }
}
