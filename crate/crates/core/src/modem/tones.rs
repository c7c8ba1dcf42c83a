//! Frequency plan: 2 channels × 54 tones at 46.875 Hz spacing starting at
//! 17.5 kHz. Within a channel the first 21 tones carry the low-group
//! symbol, the next 21 the high-group symbol, and the last 12 are a guard
//! band separating adjacent channels (and doubling as the noise-floor
//! reference).

use crate::codec::{Symbol, SYMBOLS_PER_GROUP};

/// Symbol position within a chunk, each keyed to its own frequency group.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ToneGroup {
    Low,
    High,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TonePlan {
    pub base_freq: f64,
    pub spacing: f64,
    pub channels: usize,
    pub freqs_per_channel: usize,
    pub group_size: usize,
}

impl Default for TonePlan {
    fn default() -> Self {
        TonePlan {
            base_freq: 17_500.0,
            spacing: 46.875,
            channels: 2,
            freqs_per_channel: 54,
            group_size: 21,
        }
    }
}

impl TonePlan {
    /// Frequency of tone `index` (0..54) on `channel`.
    pub fn frequency(&self, channel: usize, index: usize) -> f64 {
        debug_assert!(channel < self.channels);
        debug_assert!(index < self.freqs_per_channel);
        self.base_freq + (self.freqs_per_channel * channel + index) as f64 * self.spacing
    }

    /// Frequency carrying `symbol` in `group` on `channel`.
    pub fn symbol_frequency(&self, channel: usize, group: ToneGroup, symbol: Symbol) -> f64 {
        let offset = match group {
            ToneGroup::Low => 0,
            ToneGroup::High => self.group_size,
        };
        self.frequency(channel, offset + symbol.group_index())
    }

    /// The 18 candidate frequencies of a group, indexed by
    /// [`Symbol::group_index`].
    pub fn candidate_frequencies(&self, channel: usize, group: ToneGroup) -> Vec<f64> {
        (0..SYMBOLS_PER_GROUP)
            .map(|i| {
                self.symbol_frequency(channel, group, Symbol::from_group_index(i).unwrap())
            })
            .collect()
    }

    /// The 12 unassigned guard frequencies of a channel.
    pub fn guard_frequencies(&self, channel: usize) -> Vec<f64> {
        (2 * self.group_size..self.freqs_per_channel)
            .map(|i| self.frequency(channel, i))
            .collect()
    }

    /// Inclusive frequency span of a channel's 54 tones, widened by half a
    /// spacing on each side.
    pub fn band(&self, channel: usize) -> (f64, f64) {
        (
            self.frequency(channel, 0) - self.spacing / 2.0,
            self.frequency(channel, self.freqs_per_channel - 1) + self.spacing / 2.0,
        )
    }
}
