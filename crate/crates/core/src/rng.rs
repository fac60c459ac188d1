//! Counter-addressed random streams.
//!
//! Every random draw is identified by `(seed, stream_id, index)`. The
//! generator for a draw is keyed by that triple alone, so a batch can be
//! evaluated in any order (or in parallel) and still reproduce the
//! sequential result bit for bit.

use std::ops::Range;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngStream {
    pub seed: u64,
    pub stream_id: u64,
    /// Index of the next unreserved draw.
    #[serde(default)]
    cursor: u64,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        Self {
            seed,
            stream_id,
            cursor: 0,
        }
    }

    /// A sibling stream with the same seed and a different id.
    pub fn fork(&self, stream_id: u64) -> Self {
        Self::new(self.seed, stream_id)
    }

    pub fn cursor(&self) -> u64 {
        self.cursor
    }

    pub fn set_cursor(&mut self, cursor: u64) {
        self.cursor = cursor;
    }

    /// Reserves the next `n` draw indices.
    pub fn reserve(&mut self, n: u64) -> Range<u64> {
        let start = self.cursor;
        self.cursor += n;
        start..self.cursor
    }

    /// Generator for draw `index`, independent of every other index.
    pub fn draw_rng(&self, index: u64) -> ChaCha8Rng {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&self.seed.to_le_bytes());
        key[8..16].copy_from_slice(&self.stream_id.to_le_bytes());
        key[16..24].copy_from_slice(&index.to_le_bytes());
        ChaCha8Rng::from_seed(key)
    }

    /// Generator for the next single draw.
    pub fn next_rng(&mut self) -> ChaCha8Rng {
        let index = self.reserve(1).start;
        self.draw_rng(index)
    }
}
