//! Reproducible random substreams.
//!
//! A [`RngStream`] is a root seed plus a path of integers. Each distinct path
//! maps to an independent ChaCha8 keystream, so a trial identified by e.g.
//! `(stage, radius index, trial index)` draws the same numbers no matter which
//! thread evaluates it or in which order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Generator type handed to samplers and predicates.
pub type StreamRng = ChaCha8Rng;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RngStream {
    seed: u64,
    path: Vec<u64>,
}

// SplitMix64 finalizer.
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            path: Vec::new(),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn path(&self) -> &[u64] {
        &self.path
    }

    /// Substream one level below this one.
    pub fn child(&self, index: u64) -> Self {
        let mut path = self.path.clone();
        path.push(index);
        Self {
            seed: self.seed,
            path,
        }
    }

    /// Generator for this exact (seed, path).
    pub fn rng(&self) -> StreamRng {
        let mut key = [0u8; 32];
        let mut state = mix64(self.seed ^ 0x6a09_e667_f3bc_c908);
        // Path length is folded in so that [] and [0] differ.
        state = mix64(state ^ (self.path.len() as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
        for &p in &self.path {
            state = mix64(state.wrapping_add(0x9e37_79b9_7f4a_7c15) ^ mix64(p));
        }
        for (i, chunk) in key.chunks_exact_mut(8).enumerate() {
            let word =
                mix64(state.wrapping_add((i as u64 + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15)));
            chunk.copy_from_slice(&word.to_le_bytes());
        }
        ChaCha8Rng::from_seed(key)
    }
}
