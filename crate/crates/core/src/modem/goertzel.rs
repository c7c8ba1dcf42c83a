//! Single-frequency DFT magnitudes via the Goertzel recurrence.
//!
//! Works for arbitrary (fractional-bin) target frequencies, which matters
//! here: the tone plan's 46.875 Hz grid does not land on integer bins of
//! the 2048-sample analysis window.

use crate::audio::SAMPLE_RATE;

/// Normalized magnitude (2|X|/N) of `samples` at `freq` Hz.
///
/// A full-scale sinusoid at exactly `freq` yields its amplitude.
pub fn magnitude(samples: &[f32], freq: f64) -> f64 {
    let w = 2.0 * std::f64::consts::PI * freq / SAMPLE_RATE as f64;
    let coeff = 2.0 * w.cos();
    let mut q1 = 0.0f64;
    let mut q2 = 0.0f64;
    for &s in samples {
        let q0 = s as f64 + coeff * q1 - q2;
        q2 = q1;
        q1 = q0;
    }
    let power = q1 * q1 + q2 * q2 - q1 * q2 * coeff;
    2.0 * power.max(0.0).sqrt() / samples.len() as f64
}

/// Magnitudes at several frequencies over the same window.
pub fn magnitudes(samples: &[f32], freqs: &[f64]) -> Vec<f64> {
    freqs.iter().map(|&f| magnitude(samples, f)).collect()
}

/// Median of a magnitude set; used as an adaptive noise-floor estimate.
pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mid = sorted.len() / 2;
    if sorted.len() % 2 == 0 {
        (sorted[mid - 1] + sorted[mid]) / 2.0
    } else {
        sorted[mid]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tone(freq: f64, len: usize, amp: f64) -> Vec<f32> {
        (0..len)
            .map(|n| {
                (amp * (2.0 * std::f64::consts::PI * freq * n as f64 / SAMPLE_RATE as f64).sin())
                    as f32
            })
            .collect()
    }

    #[test]
    fn recovers_amplitude_at_target() {
        let samples = tone(18_250.0, 2048, 0.45);
        let mag = magnitude(&samples, 18_250.0);
        assert!((mag - 0.45).abs() < 0.01, "got {mag}");
    }

    #[test]
    fn plan_spaced_tones_are_orthogonal() {
        // 46.875 Hz apart over 2048 samples = exactly 2 bins: zero response.
        let samples = tone(17_500.0, 2048, 0.45);
        let off = magnitude(&samples, 17_500.0 + 46.875);
        assert!(off < 0.002, "leakage {off}");
    }

    #[test]
    fn silence_is_zero() {
        let samples = vec![0.0f32; 2048];
        assert_eq!(magnitude(&samples, 20_000.0), 0.0);
    }

    #[test]
    fn median_of_sets() {
        assert_eq!(median(&[]), 0.0);
        assert_eq!(median(&[3.0]), 3.0);
        assert_eq!(median(&[5.0, 1.0, 3.0]), 3.0);
        assert_eq!(median(&[4.0, 1.0, 3.0, 2.0]), 2.5);
    }
}
