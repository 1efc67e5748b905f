use std::collections::VecDeque;
use std::ops::Range;

use super::StateKey;
use crate::framebuffer::GrayFrame;

const VELOCITY_BINS: u32 = 5;

/// Maps a pixel observation to a small integer state.
///
/// The brightest column of a horizontal band (where the ball travels) is the
/// ball position, binned into `position_bins`. Its column change since the
/// reference observation, clamped to -2..=2, is the velocity bin. Training
/// uses the observation `velocity_lag` steps back as the reference (see
/// [`StateTracker`]). A band with no single brightest region (uniform, e.g.
/// the red game-over screen) maps to [`blank_key`](Self::blank_key).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Discretizer {
    pub band_rows: Range<usize>,
    pub position_bins: u32,
    pub velocity_lag: usize,
}

impl Default for Discretizer {
    /// Band and bins for the default 16x16 observation of multitask-lite,
    /// where the ball occupies row 12.
    fn default() -> Self {
        Discretizer {
            band_rows: 12..13,
            position_bins: 12,
            velocity_lag: 4,
        }
    }
}

impl Discretizer {
    pub fn blank_key(&self) -> StateKey {
        StateKey(self.position_bins * VELOCITY_BINS)
    }

    /// Number of distinct keys, including the blank key.
    pub fn num_states(&self) -> u32 {
        self.position_bins * VELOCITY_BINS + 1
    }

    /// Brightest band column, lowest index on ties; `None` when the band is uniform.
    pub fn ball_column(&self, frame: &GrayFrame) -> Option<usize> {
        let rows = self.band_rows.start.min(frame.height())..self.band_rows.end.min(frame.height());
        let mut sums = vec![0u32; frame.width()];
        for y in rows {
            for (s, &v) in sums.iter_mut().zip(frame.row(y)) {
                *s += u32::from(v);
            }
        }
        let first = *sums.first()?;
        if sums.iter().all(|&s| s == first) {
            return None;
        }
        let mut best = 0;
        for (i, &s) in sums.iter().enumerate() {
            if s > sums[best] {
                best = i;
            }
        }
        Some(best)
    }

    pub fn position_bin(&self, column: usize, width: usize) -> u32 {
        ((column as u64 * u64::from(self.position_bins)) / width as u64) as u32
    }

    /// `key = position_bin * 5 + (velocity_bin + 2)`.
    pub fn discretize(&self, frame: &GrayFrame, previous: Option<&GrayFrame>) -> StateKey {
        let Some(col) = self.ball_column(frame) else {
            return self.blank_key();
        };
        let velocity = previous
            .and_then(|p| self.ball_column(p))
            .map_or(0, |prev| (col as i64 - prev as i64).clamp(-2, 2));
        let bin = self.position_bin(col, frame.width());
        StateKey(bin * VELOCITY_BINS + (velocity + 2) as u32)
    }
}

/// Tracks recent observations within an episode so each new one can be
/// discretized against the frame `velocity_lag` steps earlier (or the
/// episode's first frame, early on).
#[derive(Debug, Clone)]
pub struct StateTracker {
    discretizer: Discretizer,
    history: VecDeque<GrayFrame>,
}

impl StateTracker {
    pub fn new(discretizer: Discretizer) -> Self {
        StateTracker {
            history: VecDeque::with_capacity(discretizer.velocity_lag + 1),
            discretizer,
        }
    }

    pub fn discretizer(&self) -> &Discretizer {
        &self.discretizer
    }

    /// Starts a new episode at `frame`.
    pub fn reset(&mut self, frame: &GrayFrame) -> StateKey {
        self.history.clear();
        self.history.push_back(frame.clone());
        self.discretizer.discretize(frame, None)
    }

    pub fn observe(&mut self, frame: &GrayFrame) -> StateKey {
        if self.history.len() > self.discretizer.velocity_lag.max(1) {
            self.history.pop_front();
        }
        let key = self.discretizer.discretize(frame, self.history.front());
        self.history.push_back(frame.clone());
        key
    }
}
