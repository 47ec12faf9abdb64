//! Reproducible random substreams.
//!
//! A [`StreamKey`] is derived once from a user seed; every independent unit
//! of work (one dataset row, one batch of draws) then opens its own ChaCha
//! stream by id. Results never depend on which thread consumed which stream.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Concrete generator used throughout the crate.
pub type StreamRng = ChaCha8Rng;

/// Key from which per-row / per-task streams are opened.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StreamKey {
    key: [u8; 32],
}

impl StreamKey {
    pub fn from_seed(seed: u64) -> Self {
        // splitmix64 expansion of the seed into a 256-bit ChaCha key
        let mut state = seed;
        let mut key = [0u8; 32];
        for chunk in key.chunks_exact_mut(8) {
            state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
            let mut z = state;
            z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
            z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
            z ^= z >> 31;
            chunk.copy_from_slice(&z.to_le_bytes());
        }
        Self { key }
    }

    /// Opens the stream with the given id. Distinct ids give independent
    /// streams; the same (seed, id) always yields the same sequence.
    pub fn stream(&self, id: u64) -> StreamRng {
        let mut rng = ChaCha8Rng::from_seed(self.key);
        rng.set_stream(id);
        rng
    }
}
